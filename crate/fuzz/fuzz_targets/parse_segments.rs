#![no_main]

use dvcprep_core::segmenter::{parse_segments, validate_partition};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = parse_segments(text) {
            for r in records {
                let t = r.segments.last().expect("nonempty partition").end;
                assert!(validate_partition(&r.segments, t).is_ok());
            }
        }
    }
});
