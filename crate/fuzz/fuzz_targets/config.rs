#![no_main]

use dexparse::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(text, None, None) {
        let _ = cfg.validate();
        let _ = cfg.to_toml();
    }
});
