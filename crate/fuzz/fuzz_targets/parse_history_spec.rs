#![no_main]

use cml_stability::config::{parse_history_spec, HistorySpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_history_spec(text) {
        Ok(HistorySpec::Constant(level)) => assert!(level >= 0.0 && level.is_finite()),
        Ok(HistorySpec::Perturb { amplitude, .. }) => assert!(amplitude.is_finite()),
        Ok(HistorySpec::File(_)) | Err(_) => {}
    }
});
