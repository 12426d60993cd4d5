use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavefront-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn roots_without_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = lab(&["--out", out.to_str().unwrap(), "roots", "--preset", "beverton-holt:r=2,kappa=1", "--c", "2.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "roots.csv");
    let l1: f64 = column(&csv, "lambda1")[0].parse().unwrap();
    let l2: f64 = column(&csv, "lambda2")[0].parse().unwrap();
    assert!((l1 - 0.5).abs() < 1e-10 && (l2 - 2.0).abs() < 1e-10, "{l1} {l2}");
    assert!(read(&out, "report.txt").contains("status = pass"));
}

#[test]
fn below_critical_speed_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = lab(&["--out", out.to_str().unwrap(), "roots", "--c", "1.0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (body, needle) in [
        ("version = 1\n[model]\nh = 0.5\nbogus = 1\n", "line 4"),
        ("[model]\nh = 0.5\n", "version"),
        ("version = 3\n", "version"),
        ("version = 1\n[model]\nh = -1.0\n", "model.h"),
        ("version = 1\n[numerics]\ndx = \"fine\"\n", "line 3"),
    ] {
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, body).unwrap();
        let o = lab(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "roots", "--c", "2.5"]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{body}: {err}");
        assert!(!out.exists(), "{body}");
    }
}

#[test]
fn missing_required_parameter_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = lab(&["--out", out.to_str().unwrap(), "select-speed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.lambda"));
    assert!(!out.exists());
}

#[test]
fn schema_round_trips() {
    let o = lab(&["--print-schema"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("schema.toml");
    std::fs::write(&cfg, &o.stdout).unwrap();
    let out = dir.path().join("out");
    let o = lab(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "critical-speed"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(&out, "report.txt");
    let c: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("c_sharp = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((c - 2.0).abs() < 1e-9, "{report}");
}

fn sweep(dir: &Path, workers: &str) -> (i32, String, String) {
    let cfg = dir.join("sweep.toml");
    std::fs::write(
        &cfg,
        "version = 1\n[experiment]\nkind = \"select-speed\"\n[sweep]\nlambda = [0.2, 0.4, 0.6, 0.8, 1.0, 1.5]\nh = [0.0, 0.5]\ngp0 = [2.0, 3.0]\n",
    )
    .unwrap();
    let out = dir.join(format!("w{workers}"));
    let o = lab(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
        "sweep",
    ]);
    (o.status.code().unwrap(), read(&out, "sweep.csv"), read(&out, "report.txt"))
}

#[test]
fn sweep_rows_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let (code1, csv1, rep1) = sweep(dir.path(), "1");
    let (code8, csv8, rep8) = sweep(dir.path(), "8");
    assert_eq!((code1, code8), (0, 0));
    assert_eq!(csv1.lines().count(), 25);
    assert_eq!(csv1, csv8);
    assert_eq!(rep1, rep8);
    // λ = 0.2 is selected with c = λ + 1/λ; λ = 1.5 saturates at c_# = 2
    let c: Vec<f64> = column(&csv1, "c_selected").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(c.len(), 24);
    assert!((c[0] - 5.2).abs() < 1e-12, "{}", c[0]);
    assert!((c[20] - 2.0).abs() < 1e-8, "{}", c[20]);
}

#[test]
fn sweep_from_flags_with_errors_reported_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = lab(&[
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "2",
        "sweep",
        "--kind",
        "roots",
        "--over",
        "c=1.5,4.5",
        "--over",
        "p_over_delta=2,5",
        "--preset",
        "nicholson",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let csv = read(&out, "sweep.csv");
    assert_eq!(column(&csv, "status"), ["error", "error", "pass", "pass"]);
    assert_eq!(column(&csv, "map_regime"), ["monotone", "unimodal-contracting", "monotone", "unimodal-contracting"]);
}

#[test]
fn failed_check_exits_four_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = lab(&[
        "--out",
        out.to_str().unwrap(),
        "tail-invariance",
        "--t-end",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&out, "report.txt").contains("FAIL tail growth rate"));
}
