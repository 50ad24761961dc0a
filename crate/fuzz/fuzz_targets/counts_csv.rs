#![no_main]
use fss_core::io::{assemble_stream, parse_counts_csv};
use fss_core::LatticeConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_counts_csv(text) {
        for r in &records {
            assert!(r.value.fract() == 0.0);
        }
        // out-of-range cells and day gaps must come back as errors
        let _ = assemble_stream(LatticeConfig::new(4, 4).unwrap(), &records, None);
    }
});
