#![no_main]

use libfuzzer_sys::fuzz_target;
use rem::io::{parse_domain, parse_usize_list};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(d) = parse_domain(text) {
        assert!(d.lower() < d.upper());
        assert!(d.contains(d.clamp(0.0)));
    }
    let _ = parse_usize_list(text);
});
