#![no_main]

use libfuzzer_sys::fuzz_target;
use wreathwalk::walk::parse_estimates;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(es) = parse_estimates(text) {
        for e in es {
            assert!((0.0..=1.0).contains(&e.estimate) && e.stderr >= 0.0);
        }
    }
});
