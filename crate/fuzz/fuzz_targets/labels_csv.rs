#![no_main]

use gmmamp::io::{format_labels_csv, parse_labels_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&r, rest)) = data.split_first() else { return };
    let r = 1 + (r as usize % 32);
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(labels) = parse_labels_csv(text, r) {
        assert!(labels.as_slice().iter().all(|&l| l < r));
        let again = parse_labels_csv(&format_labels_csv(&labels), r).expect("formatted labels parse");
        assert_eq!(labels, again);
    }
});
