#![no_main]

use std::ffi::OsString;

use gmmamp_cli::config::{merge_config, parse_kv_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pairs) = parse_kv_config(text) {
        let argv: Vec<OsString> = ["gmmamp", "se", "--rho", "2"].iter().map(OsString::from).collect();
        let merged = merge_config(&argv, &pairs);
        // the explicit flags always come last so they win
        assert_eq!(&merged[merged.len() - 2..], &argv[2..]);
    }
});
