#![no_main]

use dvcprep_core::feature_io::parse_captions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_captions(text);
    }
});
