#![no_main]

use libfuzzer_sys::fuzz_target;
use multiscan::calibrate::{CalibrationKind, Model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kind) = text.parse::<CalibrationKind>() {
        assert_eq!(kind.to_string().parse::<CalibrationKind>().unwrap(), kind);
    }
    if let Ok(model) = text.parse::<Model>() {
        assert_eq!(model.to_string().parse::<Model>().unwrap(), model);
    }
});
