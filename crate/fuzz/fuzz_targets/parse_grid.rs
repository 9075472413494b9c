#![no_main]

use libfuzzer_sys::fuzz_target;
use multiscan::io::{grid_to_csv, parse_grid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_grid(text) {
        let (n1, n2) = grid.dims();
        assert_eq!(grid.values().len(), n1 * n2);
        assert_eq!(parse_grid(&grid_to_csv(&grid)).unwrap(), grid);
    }
});
