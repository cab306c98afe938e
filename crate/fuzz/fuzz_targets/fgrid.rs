#![no_main]

use libfuzzer_sys::fuzz_target;
use wrinkle_core::gridio::FloatGrid;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = FloatGrid::from_fgrid_bytes(data) {
        let again =
            FloatGrid::from_fgrid_bytes(&grid.to_fgrid_bytes()).expect("re-encoded grid parses");
        assert_eq!(grid, again);
    }
});
