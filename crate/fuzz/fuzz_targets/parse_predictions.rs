#![no_main]

use dvcprep_core::localization::parse_predictions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_predictions(text);
    }
});
