//! Replays the checked-in fuzz seeds through the same round-trip properties
//! the fuzz targets assert.

use egvp::config::parse_config;
use egvp::results::ResultTable;
use std::path::{Path, PathBuf};

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn config_seeds_round_trip() {
    let mut accepted = 0;
    for (path, text) in seeds("config_parse") {
        if let Ok(c) = parse_config(&text) {
            let again = parse_config(&c.to_toml()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(again, c, "{}", path.display());
            accepted += 1;
        }
    }
    assert!(accepted >= 8);
}

#[test]
fn table_seeds_round_trip() {
    for (path, text) in seeds("csv_readback") {
        let t = ResultTable::from_csv(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ResultTable::from_csv(&t.to_csv().unwrap()).unwrap();
        assert!(again.rows.iter().zip(&t.rows).all(|(a, b)| a.same_as(b)));
        assert_eq!(again.rows.len(), t.rows.len());
    }
    for (path, text) in seeds("json_readback") {
        let t = ResultTable::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ResultTable::from_json(&t.to_json().unwrap()).unwrap();
        assert!(again.rows.iter().zip(&t.rows).all(|(a, b)| a.same_as(b)));
        assert_eq!(again.rows.len(), t.rows.len());
    }
}
