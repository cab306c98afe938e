#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::gridio::LabelMask;

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = LabelMask::from_pgm_bytes(data) {
        let again =
            LabelMask::from_pgm_bytes(&mask.to_pgm_bytes()).expect("re-encoded mask parses");
        assert_eq!(mask, again);
    }
});
