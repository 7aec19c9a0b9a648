#![no_main]

use dexparse::tagger::{read_tagger_model, tag_sentence, write_tagger_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = read_tagger_model(text) {
        let again = read_tagger_model(&write_tagger_model(&model)).unwrap();
        assert_eq!(again, model);
        let tokens: Vec<String> = text.split_whitespace().take(8).map(str::to_string).collect();
        let _ = tag_sentence(&model, &tokens);
    }
});
