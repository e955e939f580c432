use std::fs;
use std::process::Command;

use sdg_core::experiment::ResultBundle;

fn sdg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdg"))
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["dpp"], "typo": true}"#).unwrap();
    let out = dir.path().join("out");
    let st = sdg().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("\"kind\":\"schema\""));
    assert!(!out.exists());
}

#[test]
fn dpp_on_cancel_drift_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["dpp"], "output_dir": "res"}"#).unwrap();
    let st = sdg().args(["run", cfg.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let b = ResultBundle::read(&dir.path().join("res")).unwrap();
    assert!(b.scalar("dpp", "dpp_residual_lower").unwrap().value.unwrap() <= 1e-10);
}

#[test]
fn isaacs_expect_gap_records_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "problem": "isaacs-gap", "suites": ["isaacs"], "isaacs_mode": "expect-gap"}"#).unwrap();
    let out = dir.path().join("out");
    let st = sdg().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(ResultBundle::read(&out).unwrap().scalar("isaacs", "gap_unit_p").unwrap().value, Some(2.0));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "problem": "isaacs-gap", "suites": ["isaacs"], "isaacs_mode": "expect-hold"}"#).unwrap();
    let out = dir.path().join("out");
    let st = sdg().args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn golden_check_detects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "problem": "cancel-drift", "suites": ["dpp"], "lattice": {"n_steps": 4}}"#).unwrap();
    let (res, gold) = (dir.path().join("res"), dir.path().join("gold"));
    assert!(sdg().args(["run", cfg.to_str().unwrap(), "--out", res.to_str().unwrap()]).status().unwrap().success());
    assert!(sdg().args(["freeze-golden", res.to_str().unwrap(), gold.to_str().unwrap()]).status().unwrap().success());
    let check = || sdg().args(["golden-check", res.to_str().unwrap(), gold.to_str().unwrap()]).status().unwrap().code();
    assert_eq!(check(), Some(0));
    let path = res.join("results.json");
    let mut b: ResultBundle = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let s = b.scalars.iter_mut().find(|s| s.name == "lower_value").unwrap();
    s.value = Some(s.value.unwrap() + 1e-6);
    fs::write(&path, serde_json::to_string(&b).unwrap()).unwrap();
    assert_eq!(check(), Some(1));
}

#[test]
fn listings() {
    let out = sdg().arg("list-suites").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for s in ["dpp", "sublinear", "domination", "comparison", "regularity", "stability", "freezing-rate", "isaacs", "pde-cross"] {
        assert!(text.lines().any(|l| l == s), "{s}");
    }
    let out = sdg().arg("list-problems").output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().lines().count() >= 6);
    let out = sdg().arg("trace-matrix").output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("property,statement,suite,tolerance,basis"));
}
