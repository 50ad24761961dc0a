#![no_main]
use fss_core::io::{parse_run_config, write_run_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_run_config(text) {
        let again = parse_run_config(&write_run_config(&cfg)).expect("written config parses");
        assert_eq!(write_run_config(&cfg), write_run_config(&again));
    }
});
