#![no_main]

use libfuzzer_sys::fuzz_target;
use ntc_core::io::parse_samples_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_samples_csv(text);
});
