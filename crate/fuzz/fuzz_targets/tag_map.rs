#![no_main]

use dexparse::treebank_io::{read_tag_map, write_tag_map};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = read_tag_map(text) {
        assert_eq!(read_tag_map(&write_tag_map(&table)).unwrap(), table);
    }
});
