#![no_main]

use libfuzzer_sys::fuzz_target;
use multiscan::calibrate::TableEntry;

fuzz_target!(|data: &[u8]| {
    if let Ok(entry) = TableEntry::decode(data) {
        // anything that decodes passed the checksum, so it must re-encode identically
        let bytes = entry.encode().unwrap();
        assert_eq!(TableEntry::decode(&bytes).unwrap(), entry);
    }
});
