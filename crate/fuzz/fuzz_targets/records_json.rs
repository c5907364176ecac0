#![no_main]

use libfuzzer_sys::fuzz_target;
use rem::io::{records_from_json, records_to_csv, records_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(records) = records_from_json(text) else {
        return;
    };
    let json = records_to_json(&records).unwrap();
    assert_eq!(records_from_json(&json).unwrap(), records);
    let _ = records_to_csv(&records);
});
