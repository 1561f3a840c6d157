#![no_main]

use libfuzzer_sys::fuzz_target;
use ntc_core::io::{parse_schedule_json, schedule_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_schedule_json(text) {
        assert_eq!(parse_schedule_json(&schedule_to_json(&s)).unwrap(), s);
        let _ = s.metrics();
    }
});
