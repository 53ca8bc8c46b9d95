#![no_main]

use gmmamp::io::{format_matrix_csv, parse_matrix_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = parse_matrix_csv(text) {
        // anything accepted must survive a write and read unchanged
        let again = parse_matrix_csv(&format_matrix_csv(a.view())).expect("formatted matrix parses");
        assert_eq!(a, again);
    }
});
