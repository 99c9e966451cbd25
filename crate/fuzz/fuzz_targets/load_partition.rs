#![no_main]

use libfuzzer_sys::fuzz_target;
use wreathwalk::partition::DyadicPartition;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = DyadicPartition::load(text) {
        let dump = p.dump();
        assert_eq!(DyadicPartition::load(&dump).expect("dump loads").dump(), dump);
    }
});
