#![no_main]

use libfuzzer_sys::fuzz_target;
use multiscan::io::{parse_points, points_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sample) = parse_points(text) {
        let pts = sample.points();
        assert!(pts.len() >= 2);
        assert!(pts.windows(2).all(|w| w[0] <= w[1]));
        assert!(pts.iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(parse_points(&points_to_csv(&sample)).unwrap(), sample);
    }
});
