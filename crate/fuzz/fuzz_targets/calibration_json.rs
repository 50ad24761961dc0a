#![no_main]
use fss_core::io::parse_calibration_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_calibration_json(text) {
        let again = parse_calibration_json(&file.to_json()).expect("written calibration parses");
        assert_eq!(again.to_json(), file.to_json());
    }
});
