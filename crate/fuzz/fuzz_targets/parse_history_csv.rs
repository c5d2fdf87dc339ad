#![no_main]

use cml_stability::config::parse_history_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(h) = parse_history_csv(text) {
        let times = h.times();
        for w in times.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let x = h.eval(mid);
            assert!(
                x.is_finite() && x >= 0.0,
                "interpolant left the data range at {mid}: {x}"
            );
        }
    }
});
