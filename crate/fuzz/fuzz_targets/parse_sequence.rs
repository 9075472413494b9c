#![no_main]

use libfuzzer_sys::fuzz_target;
use multiscan::io::{parse_sequence, sequence_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(seq) = parse_sequence(text) {
        assert!(!seq.is_empty());
        assert!(seq.values().iter().all(|v| v.is_finite()));
        let again = parse_sequence(&sequence_to_csv(&seq)).unwrap();
        assert_eq!(again, seq);
    }
});
