use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fklab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

/// report.json with the timestamp line removed.
fn report_without_timestamp(dir: &Path) -> String {
    fs::read_to_string(dir.join("report.json"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

const SMALL_CHAIN: &str = r#"{"experiment": "chain_bound", "chain_bound": {"paths": 400}}"#;

#[test]
fn negative_node_count_exits_3_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "spectrum", "grid": {"r": 10, "n": -401}}"#,
    );
    let out = tmp.path().join("out");
    let o = fklab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
}

#[test]
fn even_node_count_and_unknown_key_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for body in [
        r#"{"experiment": "spectrum", "grid": {"r": 10, "n": 400}}"#,
        r#"{"experiment": "spectrum", "colour": "blue"}"#,
        r#"{"experiment": "spectrum", "model": {"kernel": {"family": "truncated", "alpha1": 3.0}, "potential": {"shape": {"family": "power", "theta": 2}}}}"#,
    ] {
        let cfg = write_config(tmp.path(), body);
        let o = fklab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "{body}");
        assert!(!out.exists());
    }
}

#[test]
fn bad_flags_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"experiment": "spectrum"}"#);
    assert_eq!(
        fklab(&["--config", &cfg, "--experiment", "spectra"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        fklab(&["--config", &cfg, "--frobnicate"]).status.code(),
        Some(3)
    );
    assert_eq!(fklab(&[]).status.code(), Some(3));
    assert_eq!(fklab(&["--help"]).status.code(), Some(0));
}

#[test]
fn spectrum_reports_positive_ground_energy_and_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "spectrum",
            "model": {"kernel": {"family": "truncated", "alpha1": 1.0, "kappa": 1.0},
                      "potential": {"shape": {"family": "power", "theta": 2.0}}},
            "grid": {"r": 10, "n": 401}}"#,
    );
    let out = tmp.path().join("spec");
    let o = fklab(&[
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--export-matrix",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let r = report(&out);
    let l1 = r["diagnostics"]["lambda1"].as_f64().unwrap();
    let gap = r["diagnostics"]["gap"].as_f64().unwrap();
    assert!(l1 > 0.0 && gap > 0.0, "{l1} {gap}");
    assert_eq!(r["status"], "passed");
    assert!(!out.join("FAILED").exists());

    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved-config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["scheme"]["dt"].as_f64(), Some(1e-4));
    assert_eq!(resolved["model"]["kernel"]["c1"].as_f64(), Some(1.0));

    let trace = fs::read_to_string(out.join("phi1_trace.dat")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("x phi1 log_phi1 V"));
    assert_eq!(lines.count(), 401);
    assert!(fs::read_to_string(out.join("eigenvalues.csv"))
        .unwrap()
        .starts_with("index,lambda\n"));

    let bin = fs::read(out.join("operator.bin")).unwrap();
    assert_eq!(bin.len(), 24 + 8 * 401 * 401);
    assert_eq!(u64::from_le_bytes(bin[..8].try_into().unwrap()), 401);
    assert_eq!(f64::from_le_bytes(bin[8..16].try_into().unwrap()), 10.0);
}

#[test]
fn emit_plot_from_existing_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "spectrum", "grid": {"r": 5, "n": 101}}"#,
    );
    let out = tmp.path().join("spec");
    let out_s = out.to_str().unwrap();
    assert_eq!(
        fklab(&["--config", &cfg, "--out", out_s]).status.code(),
        Some(0)
    );
    fs::remove_file(out.join("phi1_trace.dat")).unwrap();
    let o = fklab(&["--emit-plot", "phi1_trace", "--out", out_s]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("phi1_trace.dat").exists());
    assert_eq!(
        fklab(&["--emit-plot", "phi_trace", "--out", out_s])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        fklab(&["--emit-plot", "mc_scaling", "--out", out_s])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn failing_invariant_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "iuc_dichotomy", "iuc_dichotomy": {"thetas": [2.0], "radii": [5.0, 10.0]}}"#,
    );
    let out = tmp.path().join("iuc");
    let o = fklab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iuc_verdict_theta_2"));
    let marker = fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.contains("iuc_verdict_theta_2"));
    let r = report(&out);
    assert_eq!(r["status"], "failed");
    assert!(out.join("iuc_ratio_vs_R_theta_2.dat").exists());
}

#[test]
fn iuc_small_theta_is_non_iuc_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "iuc_dichotomy", "iuc_dichotomy": {"thetas": [0.5], "radii": [5.0, 10.0]}}"#,
    );
    let out = tmp.path().join("iuc");
    let o = fklab(&["--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(
        r["diagnostics"]["thetas"][0]["verdict"],
        "non_iuc_consistent"
    );
    let dat = fs::read_to_string(out.join("iuc_ratio_vs_R_theta_0.5.dat")).unwrap();
    assert_eq!(dat.lines().next(), Some("R t Lambda"));
    assert_eq!(dat.lines().count(), 3);
}

#[test]
fn reports_are_reproducible_up_to_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CHAIN);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(
        fklab(&["--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        fklab(&[
            "--config",
            &cfg,
            "--out",
            b.to_str().unwrap(),
            "--threads",
            "3"
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(report_without_timestamp(&a), report_without_timestamp(&b));
    assert_eq!(
        fklab(&[
            "--config",
            &cfg,
            "--out",
            c.to_str().unwrap(),
            "--seed",
            "99"
        ])
        .status
        .code(),
        Some(0)
    );
    assert_ne!(report_without_timestamp(&a), report_without_timestamp(&c));
    assert_eq!(report(&c)["seed"], 99);
}

#[test]
fn rerun_clears_stale_failure_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("FAILED"), "old").unwrap();
    let cfg = write_config(tmp.path(), r#"{"experiment": "inequality_suite"}"#);
    assert_eq!(
        fklab(&["--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert!(!out.join("FAILED").exists());
    assert!(out.join("local_super_poincare.csv").exists());
}
