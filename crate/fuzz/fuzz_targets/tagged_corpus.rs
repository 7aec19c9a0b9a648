#![no_main]

use dexparse::treebank_io::{read_tagged_corpus, write_tagged_corpus};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = read_tagged_corpus(text) {
        assert_eq!(read_tagged_corpus(&write_tagged_corpus(&corpus)).unwrap(), corpus);
    }
});
