use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use stochastic_vortices::config::parse_config;
use stochastic_vortices::runner::{dispatch, Command, RunError};

fn vortex(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Process::new(env!("CARGO_BIN_EXE_vortex"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap()
}

fn with_output(dir: &Path, body: &str) -> String {
    format!("{body}\noutput_dir = {:?}\n", dir.join("out").display().to_string())
}

const SMALL_SIM: &str = "lambda = 4.0\ntheta = 1.0\nt_end = 0.5\nk_max = 16\nn_paths = 2\nseed = 42\nsnapshot_times = [0.25, 0.5]";

#[test]
fn config_examples() {
    let cfg = parse_config("lambda = 2.0\ntheta = 0.5\nt_end = 3.0\nseed = 42").unwrap();
    assert_eq!((cfg.lambda, cfg.theta, cfg.t_end, cfg.seed), (2.0, 0.5, 3.0, 42));
    assert_eq!(cfg.mc_k_max, 16);

    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&with_output(dir.path(), "big_m = \"inf\"\nn_samples = 3\nk_max = 16")).unwrap();
    dispatch(&Command::Sample, &cfg).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let manifest = &manifest["manifest"];
    assert!(manifest["truncation"]["infinite_m_tail"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["config"]["big_m"], "inf");
    assert_eq!(manifest["status"], "finished");

    let err = parse_config("theta = -0.5").unwrap_err();
    assert!(err.to_string().contains("theta"));
}

#[test]
fn simulate_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let cfg = parse_config(&with_output(d.path(), SMALL_SIM)).unwrap();
        let out = dispatch(&Command::Simulate, &cfg).unwrap();
        assert!(out.all_passed);
    }
    for f in ["snapshots.jsonl", "diagnostics.csv", "weak_form.csv"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let diag = fs::read_to_string(a.path().join("out/diagnostics.csv")).unwrap();
    let mut lines = diag.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "path,time,n_vortices,min_pair_distance,lyapunov,steps");
    let snaps = fs::read_to_string(a.path().join("out/snapshots.jsonl")).unwrap();
    // header plus two snapshots on each of two paths
    assert_eq!(snaps.lines().count(), 5);
}

#[test]
fn kernel_check_writes_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = vortex(dir.path(), &with_output(dir.path(), ""), &["kernel-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("out/kernel_check.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    assert_eq!(lines.next().unwrap(), "d,k_norm,d_k_norm,fd_error");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 50);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
    assert!(rows.iter().all(|r| r[2].is_finite() && (r[1] * r[0] - r[2]).abs() < 1e-12 * r[2].max(1.0)));
}

#[test]
fn verify_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_output(dir.path(), "sample_scale = 0.1");
    let out = vortex(dir.path(), &config, &["verify", "quadratic-variation", "double-integral-isometry"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mut lines = summary.lines().skip(1);
    assert!(lines.next().unwrap().starts_with("name,estimate,stderr,reference,pass"));
    // name, then six unquoted fields
    assert!(lines.all(|l| l.rsplit(',').nth(2) == Some("true")));
    assert!(summary.contains("\"double-integral-isometry/k0=(1,0)\","));
    let report = fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.starts_with("{\"config_hash\":"));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["reports"].as_array().unwrap().len() >= 2);
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = vortex(dir.path(), "theta = -1.0", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["key"], "theta");

    let out = vortex(dir.path(), "lamda = 1.0", &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    let out = vortex(dir.path(), &with_output(dir.path(), ""), &["verify", "no-such-check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown-check"));

    let cfg = parse_config(&with_output(dir.path(), "")).unwrap();
    let e = dispatch(&Command::Verify(vec!["bogus".into()]), &cfg).unwrap_err();
    assert!(matches!(e, RunError::UnknownCheck(_)));
}
