#![no_main]

use dvcprep_core::feature_io::parse_annotations;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sets) = parse_annotations(text) {
            for set in sets {
                assert!(!set.events.is_empty());
                assert!(set.events.windows(2).all(|w| w[0].start_sec <= w[1].start_sec));
                assert!(set.events.iter().all(|e| 0.0 <= e.start_sec && e.start_sec < e.end_sec && e.end_sec <= set.duration_sec));
            }
        }
    }
});
