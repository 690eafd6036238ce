use std::path::Path;
use std::process::{Command, Output};

fn qms(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qms"))
        .args(args)
        .current_dir(dir)
        .env_remove("QMS_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').filter_map(|c| c.parse().ok()).collect())
        .collect()
}

#[test]
fn eit_scan_dark_state_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(dir.path(), &["eit-scan", "--V", "0", "--deltar", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("# detunings, shifts and rates in gamma"));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][3..], &[0.0, 0.0, 0.0]);
    assert!(dir.path().join("eit-scan.manifest.json").exists());
}

#[test]
fn eit_scan_grid_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(dir.path(), &["eit-scan", "--V", "0:100:3", "--delta", "-1,1", "-o", "eit.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("eit.json")).unwrap()).unwrap();
    assert_eq!(doc.as_array().unwrap().len(), 6);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eit.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["parameters"]["V"], serde_json::json!([0.0, 50.0, 100.0]));
}

#[test]
fn protocol_verify_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(dir.path(), &["protocol", "--preset", "ghz", "--m", "6", "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("stabilizers: 7/7 OK"));

    let o = qms(dir.path(), &["protocol", "--preset", "tree-fig2b", "--verify", "-o", "tree.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("stabilizers: 13/13 OK"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree.json")).unwrap()).unwrap();
    assert_eq!(doc["photonic_generators"].as_array().unwrap().len(), 12);
}

#[test]
fn protocol_script_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = r#"[{"op":"hadamard_qms"},{"op":"scatter","targets":[1,2]},{"op":"measure_qms","basis":"minus"}]"#;
    std::fs::write(dir.path().join("s.json"), script).unwrap();
    let o = qms(dir.path(), &["protocol", "--script", "s.json", "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("stabilizers: 3/3 OK"));
    assert!(stdout(&o).contains("dense oracle: match"));

    let bad = r#"[{"op":"scatter","targets":[0]},{"op":"measure_qms"}]"#;
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = qms(dir.path(), &["protocol", "--script", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERR 2:"));
}

#[test]
fn dry_run_resolves_without_computing() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(
        dir.path(),
        &["fidelity-defects", "--nx", "23", "--ny", "23", "--fractions", "0,0.02,0.05,0.1", "--seed", "7", "-o", "fig3b.csv", "--dry-run"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cfg["run"]["seed"], 7);
    assert_eq!(cfg["parameters"]["fractions"], serde_json::json!([0.0, 0.02, 0.05, 0.1]));
    assert!(!dir.path().join("fig3b.csv").exists());
    assert!(!dir.path().join("fig3b.manifest.json").exists());
}

#[test]
fn every_subcommand_has_dry_run() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["scatter", "eit-scan", "fidelity-size", "fidelity-defects", "mode-spectrum"] {
        let o = qms(dir.path(), &[sub, "--dry-run"]);
        assert!(o.status.success(), "{sub}: {}", stderr(&o));
    }
    let o = qms(dir.path(), &["protocol", "--preset", "cluster1d", "--m", "4", "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["scatter", "--nx", "0"][..],
        &["scatter", "--bogus"],
        &["scatter", "--waist", "0.1"],
        &["fidelity-defects", "--fractions", "0.5,1.5"],
        &["mode-spectrum", "--nx", "11", "--ny", "11"],
        &["mode-spectrum", "--kmax", "1.2"],
        &["protocol", "--preset", "ghz"],
        &["protocol", "--preset", "ghz", "--m", "3", "--format", "csv"],
        &["eit-scan", "--gamma-r", "-1"],
        &["eit-scan", "--threads", "0"],
    ] {
        let o = qms(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("ERR 2:"), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn non_convergence_exits_3_with_partial_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(
        dir.path(),
        &[
            "fidelity-defects", "--nx", "5", "--ny", "5", "--waist", "0.5", "--fractions", "0.3", "--stderr-tol", "1e-9",
            "--min-real", "4", "--max-real", "8", "--batch", "4", "-o", "mc.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("ERR 3:"));
    let csv = std::fs::read_to_string(dir.path().join("mc.csv")).unwrap();
    assert_eq!(data_rows(&csv)[0][3], 8.0);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mc.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "error");
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"V": [0, 10], "omega-p": 2.0, "seed": 5, "output": "from-config.csv"}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let o = qms(dir.path(), &["eit-scan", "--config", "cfg.json", "--omega-p", "3", "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["parameters"]["omega-p"], 3.0);
    assert_eq!(v["parameters"]["V"], serde_json::json!([0.0, 10.0]));
    assert_eq!(v["run"]["seed"], 5);
    assert_eq!(v["run"]["output"], "from-config.csv");

    std::fs::write(dir.path().join("bad.json"), r#"{"omega": 1}"#).unwrap();
    let o = qms(dir.path(), &["eit-scan", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn defect_scan_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, env: bool| {
        let name = format!("mc-{threads}-{env}.csv");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_qms"));
        cmd.current_dir(dir.path()).args([
            "fidelity-defects", "--nx", "7", "--ny", "7", "--waist", "0.5", "--fractions", "0,0.1,0.2", "--stderr-tol",
            "0.5", "--min-real", "12", "--max-real", "24", "--batch", "5", "--seed", "11", "-o", &name,
        ]);
        if env {
            cmd.env("QMS_THREADS", threads);
        } else {
            cmd.args(["--threads", threads]);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(&name)).unwrap()
    };
    let one = run("1", false);
    for (t, env) in [("4", false), ("8", false), ("3", true)] {
        assert_eq!(run(t, env), one, "threads {t}");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mc-3-true.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 3);
}

#[test]
fn scatter_and_size_scan_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(dir.path(), &["scatter", "--nx", "7", "--ny", "7", "--waist", "0.5", "--detuning", "-0.5,0,0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().contains("lengths in lambda"));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.len(), 10);
        assert!(r[5] + r[6] <= 1.0 + 1e-9);
    }

    let o = qms(dir.path(), &["fidelity-size", "--sizes", "5:7:2", "--waist", "0.5", "-o", "size.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("size.csv")).unwrap();
    assert!(csv.contains("# config_digest:"));
    assert_eq!(data_rows(&csv).len(), 2);
}

#[test]
fn mode_spectrum_small_array() {
    let dir = tempfile::tempdir().unwrap();
    let o = qms(
        dir.path(),
        &["mode-spectrum", "--nx", "17", "--ny", "17", "--ka", "0.6", "--kmax", "0.6", "--points", "5", "--method", "all"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.ends_with(",real-space")).count(), 5);
    assert_eq!(out.lines().filter(|l| l.ends_with(",eigenmode")).count(), 5);
    assert_eq!(out.lines().filter(|l| l.ends_with(",eigenmode-diagonal")).count(), 5);
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(qms(dir.path(), &["--help"]).status.success());
    assert!(qms(dir.path(), &["--version"]).status.success());
    let o = qms(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}
