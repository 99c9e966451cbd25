//! Replays the checked-in fuzz seeds through the same round-trip
//! properties the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use wreathwalk::config::parse_config;
use wreathwalk::partition::DyadicPartition;
use wreathwalk::percolation::load_cluster_edges;
use wreathwalk::walk::parse_estimates;
use wreathwalk::wreath::{decode_vertex, encode_vertex};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (_, b) in seeds("parse_config") {
        if let Ok(cfg) = parse_config(text(&b)) {
            accepted += 1;
            assert_eq!(parse_config(&cfg.to_text()).unwrap().canonical_text(), cfg.canonical_text());
        }
    }
    assert_eq!(accepted, 2);
}

#[test]
fn partition_seeds() {
    for (name, b) in seeds("load_partition") {
        match DyadicPartition::load(text(&b)) {
            Ok(p) => assert_eq!(p.dump(), text(&b), "{name}"),
            Err(_) => assert_eq!(name, "bad_row"),
        }
    }
}

#[test]
fn cluster_seeds() {
    for (name, b) in seeds("load_cluster_edges") {
        let c = load_cluster_edges(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(c.dump_edges(), text(&b), "{name}");
    }
}

#[test]
fn estimate_seeds() {
    for (name, b) in seeds("parse_estimates") {
        let r = parse_estimates(text(&b));
        assert_eq!(r.is_err(), name == "out_of_range", "{name}");
    }
}

#[test]
fn vertex_seeds() {
    for (name, b) in seeds("decode_vertex") {
        let v = decode_vertex(&b).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(encode_vertex(&v), b);
    }
}
