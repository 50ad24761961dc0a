#![no_main]
use fss_core::io::{parse_points_csv, write_points_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_points_csv(text) {
        let again = parse_points_csv(&write_points_csv(&points)).expect("written points parse");
        assert_eq!(points.len(), again.len());
    }
});
