#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::gridio::GrayImage;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = GrayImage::from_pgm_bytes(data) {
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // other maxvals are requantized to 16 bits on write, then stable
        let bytes = img.to_pgm_bytes();
        let again = GrayImage::from_pgm_bytes(&bytes).expect("re-encoded image parses");
        for (a, b) in img.data().iter().zip(again.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        assert_eq!(again.to_pgm_bytes(), bytes);
    }
});
