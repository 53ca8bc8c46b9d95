#![no_main]

use gmmamp_cli::output::Table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Table::from_csv(text) {
        // a table read back from our own output is a fixed point
        let once = t.to_csv();
        if let Ok(t2) = Table::from_csv(&once) {
            assert_eq!(t2.to_csv(), once);
        }
    }
});
