#![no_main]

use gmmamp::io::parse_params_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_params_json(text) {
        assert!(p.n > 0 && p.m > 0 && p.r >= 2);
        assert!(p.rho.is_finite() && p.delta > 0.0);
    }
});
