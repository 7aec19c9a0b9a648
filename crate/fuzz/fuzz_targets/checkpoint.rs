#![no_main]

use dexparse::model::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_checkpoint(data) {
        assert_eq!(decode_checkpoint(&encode_checkpoint(&model)).unwrap(), model);
    }
});
