#![no_main]

use cml_stability::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_config(text) {
        // accepted configs are always valid parameter sets
        c.params.validate().expect("parser returned invalid parameters");
        assert!(c.marginal_band >= 0.0 && c.marginal_band.is_finite());
    }
});
