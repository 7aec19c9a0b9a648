#![no_main]

use dexparse::transform::{binarize, debinarize, strip_annotations, TransformConfig};
use dexparse::treebank_io::{parse_bracketed, parse_bracketed_bytes, write_treebank};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(trees) = parse_bracketed_bytes(data) else { return };
    assert_eq!(parse_bracketed(&write_treebank(&trees)).unwrap(), trees);
    let cfg = TransformConfig::default();
    for t in &trees {
        assert_eq!(&debinarize(&binarize(t)).unwrap(), t);
        if let Ok(s) = strip_annotations(t, &cfg) {
            assert_eq!(strip_annotations(&s, &cfg).unwrap(), s);
        }
    }
});
