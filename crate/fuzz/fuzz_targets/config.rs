#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::from_toml_str(text) {
        let again =
            PipelineConfig::from_toml_str(&cfg.to_toml_string()).expect("re-encoded config parses");
        assert_eq!(cfg, again);
    }
});
