use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn pdhyp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pdhyp")).args(args).output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn analyze_builtin_euler_reports_sk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("euler.toml");
    std::fs::write(&cfg, "[system]\nbuiltin = \"isentropic-euler\"\nd = 2\n").unwrap();
    let out = pdhyp(&["analyze", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["results"]["sk"], true);
    assert_eq!(r["command"], "analyze");
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_config_exits_with_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\nmodes = [64]\nperiodd = 2.0\n").unwrap();
    let out = pdhyp(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("periodd") && err.contains("line 3"), "{err}");
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn json_configs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"system": {"builtin": "linearized-euler", "d": 2}}"#).unwrap();
    let out = pdhyp(&["certify", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report(dir.path())["results"]["epsilons"].is_array());
}

#[test]
fn simulate_hash_is_independent_of_the_record_stride() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for stride in [3, 7] {
        let cfg = dir.path().join(format!("s{stride}.toml"));
        std::fs::write(
            &cfg,
            format!("[grid]\nmodes = [128]\nperiod = 4.0\n[solver]\nt_end = 4.0\nrecord_stride = {stride}\n[data]\namplitude = 1e-2\n"),
        )
        .unwrap();
        let out_dir = dir.path().join(format!("o{stride}"));
        let out = pdhyp(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        hashes.push(report(&out_dir)["results"]["final_hash"].as_str().unwrap().to_string());
        let csv = std::fs::read_to_string(out_dir.join("series.csv")).unwrap();
        assert!(csv.starts_with("t,energy,sup,"));
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("r{k}"));
        let out = pdhyp(&["decay", "--config", "preset:linear-decay-d2", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        bytes.push((std::fs::read(out_dir.join("report.json")).unwrap(), std::fs::read(out_dir.join("series.csv")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn list_names_builtins_and_presets() {
    let out = pdhyp(&["list"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let systems: Vec<&str> = v["systems"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    for name in ["linearized-euler", "isentropic-euler", "sk-counterexample"] {
        assert!(systems.contains(&name));
    }
    let presets = v["presets"].as_array().unwrap();
    let decay = presets.iter().find(|p| p["name"] == "linear-decay-d2").unwrap();
    assert_eq!(decay["parameters"]["sigma1"], 1.0);
    assert_eq!(decay["parameters"]["alpha1"], 0.5);
}

#[test]
fn failing_verdict_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    std::fs::write(&cfg, "[system]\nbuiltin = \"linearized-euler\"\nd = 2\n[task.decay]\nmode = \"oracle\"\nsigma1 = 1.0\nvariant = \"baseline\"\nwindow = [10.0, 1000.0]\nlow_tolerance = 0.001\n").unwrap();
    let out = pdhyp(&["decay", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(dir.path())["passed"], false);
}

#[test]
fn mismatched_task_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.toml");
    std::fs::write(&cfg, "[task]\nkind = \"relax\"\n").unwrap();
    let out = pdhyp(&["analyze", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
