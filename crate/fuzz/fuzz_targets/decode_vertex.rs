#![no_main]

use libfuzzer_sys::fuzz_target;
use wreathwalk::wreath::{decode_vertex, encode_vertex};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_vertex(data) {
        assert_eq!(encode_vertex(&v), data);
    }
});
