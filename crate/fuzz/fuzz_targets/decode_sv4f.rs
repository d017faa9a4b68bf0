#![no_main]

use dvcprep_core::feature_io::{decode, decode_features, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(record) = decode(data) {
        // Anything that decodes re-encodes to a record that decodes the same.
        let bytes = encode(&record).expect("decoded record encodes");
        assert_eq!(decode(&bytes).expect("re-encoded record decodes"), record);
    }
    if let Ok(features) = decode_features(data) {
        for row in features.frames() {
            let n: f64 = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-4);
        }
    }
});
