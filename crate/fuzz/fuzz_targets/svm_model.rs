#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::classify::SvmModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = SvmModel::from_bytes(data) {
        let bytes = model.to_bytes();
        let again = SvmModel::from_bytes(&bytes).expect("re-encoded model parses");
        assert_eq!(again.to_bytes(), bytes);
    }
});
