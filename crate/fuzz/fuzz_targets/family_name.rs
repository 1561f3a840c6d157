#![no_main]

use libfuzzer_sys::fuzz_target;
use ntc_core::families::Family;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = text.parse::<Family>() {
        assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
    }
});
