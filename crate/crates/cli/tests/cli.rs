use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magedge"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Writes `config` to a temp dir, pointing `symbol` at the shipped fixtures.
fn temp_config(dir: &TempDir, name: &str, mut config: Value) -> PathBuf {
    if let Some(s) = config.get("symbol").and_then(Value::as_str) {
        config["symbol"] = json!(scenarios().join(s));
    }
    let path = dir.path().join(name);
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_harper(which: &[&str]) -> Value {
    json!({
        "scenario": "small-harper",
        "symbol": "symbols/harper.json",
        "field": {"kind": "unit_constant", "dim": 2},
        "eps_grid": {"dyadic": {"from": 3, "to": 8}},
        "box_radius": 10,
        "solver": {"seed": 3},
        "which": which,
        "verify": {"regime": "lipschitz", "alpha": 2.0}
    })
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(
        bin().arg("--version").output().unwrap().status.code(),
        Some(0)
    );
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(bin().arg("sweep").output().unwrap().status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["sweep"], &missing, dir.path())), 1);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut c = small_harper(&["sup"]);
    c["solver"]["tolerance"] = json!(1e-8);
    let path = temp_config(&dir, "bad.json", c);
    let out = dir.path().join("out");
    let o = run(&["sweep"], &path, &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tolerance"));
    assert!(!out.join("sweep_sup.csv").exists());
}

#[test]
fn missing_sections_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let mut c = small_harper(&["sup"]);
    c.as_object_mut().unwrap().remove("verify");
    let path = temp_config(&dir, "c.json", c);
    assert_eq!(code(&run(&["verify"], &path, &dir.path().join("o"))), 1);
    assert_eq!(code(&run(&["flux"], &path, &dir.path().join("o"))), 1);
}

#[test]
fn identity_sweep_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["sweep"],
        &scenarios().join("identity-null.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for which in ["sup", "inf", "norm"] {
        let text = fs::read_to_string(dir.path().join(format!("sweep_{which}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("eps,edge,delta_edge,residual,flagged"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 8);
        for row in rows {
            assert_eq!(row.split(',').nth(2), Some("0"), "{row}");
        }
    }
}

#[test]
fn manifest_is_complete() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["sweep"],
        &scenarios().join("identity-null.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let m = read_json(dir.path().join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["config"]["scenario"], "identity-null");
    assert_eq!(m["config"]["solver"]["tol"], 1e-10);
    assert!(m["versions"]["magedge"].is_string());
    assert!(m["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["timings"]["stages"].as_array().unwrap().len(), 3);
    assert_eq!(m["passed"], true);
    let outputs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(
        outputs,
        [
            "sweep_sup.csv",
            "sweep_inf.csv",
            "sweep_norm.csv",
            "sweep.json"
        ]
    );
    for f in outputs {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn single_worker_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let path = temp_config(&dir, "c.json", small_harper(&["sup", "norm"]));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["verify", "--workers", "1"], &path, out);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["sweep_sup.csv", "sweep_norm.csv", "certificates.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let strip = |p: PathBuf| {
        let mut m = read_json(p);
        m.as_object_mut().unwrap().remove("timings");
        m
    };
    assert_eq!(
        strip(a.join("manifest.json")),
        strip(b.join("manifest.json"))
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let path = temp_config(&dir, "c.json", small_harper(&["sup"]));
    let o = run(&["sweep", "--seed", "99"], &path, dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        read_json(dir.path().join("manifest.json"))["config"]["solver"]["seed"],
        99
    );
}

#[test]
fn harper_lipschitz_verify_passes() {
    let dir = TempDir::new().unwrap();
    let path = temp_config(&dir, "c.json", small_harper(&["sup"]));
    let o = run(&["verify"], &path, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = read_json(dir.path().join("certificates.json"));
    assert_eq!(c["passed"], true);
    let cert = &c["certificates"][0];
    assert_eq!(cert["finite"], true);
    assert_eq!(cert["diverging"], false);
    assert!(cert["max_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn lipschitz_regime_rejects_general_field() {
    let dir = TempDir::new().unwrap();
    let mut c = small_harper(&["sup"]);
    c["field"] = json!({"kind": "sine_modulated", "amplitude": 0.5, "wavenumber": 1.0});
    c["box_radius"] = json!(4);
    let path = temp_config(&dir, "c.json", c);
    assert_eq!(code(&run(&["verify"], &path, dir.path())), 1);
}

#[test]
fn synthetic_fit_recovers_linear_law() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["fit"],
        &scenarios().join("harper-synthetic-fit.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_json(dir.path().join("fit.json"));
    let fit = &f["fits"][0];
    assert!((fit["power"]["p"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((fit["power"]["c"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(fit["preferred"], "power");
}

#[test]
fn butterfly_row_count() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["butterfly"],
        &scenarios().join("harper-butterfly.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("butterfly.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 50 * 21 * 21);
    let report = read_json(dir.path().join("butterfly.json"));
    let tables = report["gap_tables"].as_array().unwrap();
    assert_eq!(tables.len(), 50);
    assert!(tables
        .iter()
        .any(|t| !t["gaps"].as_array().unwrap().is_empty()));
}

#[test]
fn dense_cap_env_is_enforced() {
    let dir = TempDir::new().unwrap();
    let o = bin()
        .args(["butterfly", "--quiet", "--config"])
        .arg(scenarios().join("harper-butterfly.json"))
        .arg("--out")
        .arg(dir.path())
        .env("MAGEDGE_DENSE_CAP", "100")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert_eq!(
        read_json(dir.path().join("manifest.json"))["dense_cap"],
        100
    );
}

#[test]
fn flux_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["flux"],
        &scenarios().join("flux-constant.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("flux.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows[0][1], "0.5");
    assert_eq!(rows[0][2], "-0.5");
    assert_eq!(rows[1][1], "0");

    let o = run(
        &["flux"],
        &scenarios().join("flux-triangles.json"),
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("flux.csv")).unwrap();
    for line in text.lines().skip(1) {
        let defect: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(defect.abs() <= 1e-8);
    }
}

#[test]
fn harness_passes_and_flags_wide_deltas() {
    let dir = TempDir::new().unwrap();
    let o = run(
        &["harness"],
        &scenarios().join("harness.json"),
        &dir.path().join("ok"),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read_json(dir.path().join("ok/harness.json"))["passed"],
        true
    );

    let path = temp_config(
        &dir,
        "wide.json",
        json!({"scenario": "wide", "harness": {"deltas": [1.5, 0.1], "dims": [1]}}),
    );
    let o = run(&["harness"], &path, &dir.path().join("wide"));
    assert_eq!(code(&o), 2);
    assert_eq!(
        read_json(dir.path().join("wide/harness.json"))["passed"],
        false
    );
}
