#![no_main]
use libfuzzer_sys::fuzz_target;
use manet_core::scenario::sweep::{parse_seeds, parse_values};
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_values(text) {
        assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()));
    }
    if let Ok(s) = parse_seeds(text) {
        assert!(!s.is_empty());
    }
});
