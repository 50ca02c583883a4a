//! Replays the fuzz seed corpora through the same entry points the fuzz
//! targets use, so the seeds stay parseable (or cleanly rejected) on stable.

use std::fs;
use std::path::Path;

use magedge::config::{Command, FieldModel, RunConfig};
use magedge::io::{matrix_from_triplets_csv, read_sweep_csv, sweep_from_rows};
use magedge::lattice::{parse_offset_key, HoppingSymbol};
use magedge::spectral::Which;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn accepted(target: &str, f: impl Fn(&[u8]) -> bool) -> Vec<String> {
    seeds(target)
        .into_iter()
        .filter(|(_, data)| f(data))
        .map(|(name, _)| name)
        .collect()
}

#[test]
fn symbol_seeds() {
    let ok = accepted("parse_symbol", |d| {
        std::str::from_utf8(d)
            .ok()
            .and_then(|t| HoppingSymbol::from_json(t).ok())
            .is_some()
    });
    assert_eq!(ok, ["complex_tail.json", "harper.json", "identity.json"]);
}

#[test]
fn config_seeds() {
    let ok = accepted("parse_config", |d| {
        let Some(c) = std::str::from_utf8(d)
            .ok()
            .and_then(|t| RunConfig::from_json(t).ok())
        else {
            return false;
        };
        for cmd in [
            Command::Flux,
            Command::Butterfly,
            Command::Sweep,
            Command::Fit,
            Command::Verify,
            Command::Harness,
        ] {
            let _ = c.validate(cmd);
        }
        true
    });
    assert_eq!(ok.len(), 5);
    assert!(!ok.contains(&"unknown_key.json".to_string()));
}

#[test]
fn field_model_seeds() {
    let ok = accepted("parse_field_model", |d| {
        serde_json::from_slice::<FieldModel>(d)
            .ok()
            .and_then(|m| m.build().ok())
            .is_some()
    });
    assert_eq!(ok.len(), 4);
}

#[test]
fn triplet_seeds() {
    let ok = accepted("parse_triplets", |d| {
        matrix_from_triplets_csv(d, None, "seed").is_ok()
    });
    assert_eq!(ok, ["diag.csv", "hermitian.csv"]);
}

#[test]
fn sweep_seeds() {
    let ok = accepted("parse_sweep_csv", |d| {
        read_sweep_csv(d)
            .ok()
            .and_then(|rows| sweep_from_rows(&rows, Which::Sup).ok())
            .is_some()
    });
    assert_eq!(ok, ["linear.csv"]);
}

#[test]
fn offset_key_seeds() {
    let ok = accepted("parse_offset_key", |d| {
        let Some((&dim, rest)) = d.split_first() else {
            return false;
        };
        std::str::from_utf8(rest)
            .ok()
            .and_then(|k| parse_offset_key(k, usize::from(dim % 8)).ok())
            .is_some()
    });
    assert_eq!(ok, ["pair", "triple"]);
}
