#![no_main]

use libfuzzer_sys::fuzz_target;
use wreathwalk::percolation::load_cluster_edges;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = load_cluster_edges(text) {
        let dump = c.dump_edges();
        assert_eq!(load_cluster_edges(&dump).expect("dump loads").dump_edges(), dump);
    }
});
