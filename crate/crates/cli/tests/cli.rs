use std::path::Path;
use std::process::{Command, Output};

fn qlbgk(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlbgk"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

const SMALL: &[&str] = &["--grid-points", "60", "--final-time", "0.002", "--snapshot-stride", "1e-3"];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).copied().collect()
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlbgk(&["qle", "--scenario", "no-such-thing"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-thing"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qlbgk(&["qdd", "--epsilon=-1"], dir.path()).status.code(), Some(3));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epsilon = 0.01\nfrobnicate = 2\n").unwrap();
    let out = qlbgk(&["qle", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));

    let missing = dir.path().join("missing.cfg");
    assert_eq!(qlbgk(&["qle", "--config", missing.to_str().unwrap()], dir.path()).status.code(), Some(3));
}

#[test]
fn usage_errors_use_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qlbgk(&["qle", "--epsilon", "abc"], dir.path()).status.code(), Some(3));
    assert_eq!(qlbgk(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn compare_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = qlbgk(&with_small(&["compare", "--scenario", "maxwellian"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["comparison.csv", "comparison.json", "comparison.gp", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "compare");
    assert_eq!(manifest["config"]["grid_points"], 60);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(report["snapshot_times"].as_array().unwrap().len(), 3);
    assert!(report["error"].as_f64().unwrap() > 0.0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nepsilon = 0.05\nbeta = 0.02\n").unwrap();
    let args = with_small(&["qdd", "--config", cfg.to_str().unwrap(), "--beta", "0.03"]);
    let out = qlbgk(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["epsilon"], 0.05);
    assert_eq!(manifest["config"]["beta"], 0.03);
    assert!(dir.path().join("qdd.csv").is_file());
    assert!(dir.path().join("qdd_summary.json").is_file());
}
