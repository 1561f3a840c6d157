#![no_main]

use libfuzzer_sys::fuzz_target;
use ntc_core::io::{density_to_json, parse_density_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_density_json(text) {
        // accepted densities re-parse to themselves
        assert_eq!(parse_density_json(&density_to_json(&d)).unwrap(), d);
    }
});
