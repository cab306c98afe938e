#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::synth::SceneSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = SceneSpec::from_toml_str(text) {
        let again =
            SceneSpec::from_toml_str(&spec.to_toml_string()).expect("re-encoded spec parses");
        assert_eq!(again.width, spec.width);
        assert_eq!(again.bumps.len(), spec.bumps.len());
        assert_eq!(again.wrinkles.len(), spec.wrinkles.len());
    }
});
