#![no_main]

use congest_color::harness::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        if let Ok(exp) = cfg.validate(Some(0)) {
            assert!(!exp.seeds.is_empty());
            assert!(exp.params.bandwidth_multiplier >= 1);
        }
    }
});
