use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn vctl(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vctl"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("vctl runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn zero_scenario_has_zero_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("zero.toml");
    let out = vctl(&["simulate", "--config", path(&cfg), "--out", path(dir.path())], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("diagnostics.csv"));
    assert!(rows.len() > 1);
    for row in &rows {
        for (name, v) in header.iter().zip(row).skip(2) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{name}");
        }
    }
    let dump = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(dump.contains("[solver]"));
    assert!(dir.path().join("rho").join("rho_00000.bin").exists());
}

#[test]
fn snapshots_follow_the_stride() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("zero.toml");
    let out = vctl(&["simulate", "--config", path(&cfg), "--out", path(dir.path()), "--snapshot-stride", "2"], &[("VCTL_GRID__NT", "4")]);
    assert!(out.status.success());
    let snaps = dir.path().join("snapshots");
    for k in [0, 2, 4] {
        assert!(snaps.join(format!("f_{k:05}.bin")).exists());
        assert!(snaps.join(format!("fields_{k:05}.bin")).exists());
    }
    assert!(!snaps.join("f_00001.bin").exists());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nnx = 16\nnt = 1\n").unwrap();
    let out = vctl(&["simulate", "--config", path(&cfg), "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL"));

    let out = vctl(&["validate", "--suite", "nonexistent", "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = vctl(&["simulate", "--config", path(&dir.path().join("none.toml"))], &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn numerical_aborts_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("kick.toml");
    // a coil strong enough to push the plasma out of the momentum box
    fs::write(
        &cfg,
        r#"
[grid]
x_extent = 7.0
p_extent = 4.0
nx = 16
np = 16
nt = 8

[initial]
profile = "gaussian-blob"
amplitude = 1e-3
sigma_x = 0.6
sigma_p = 0.5

[coils]
preset = "custom"

[[coils.custom]]
kind = "ring"
radius = 1.0
width = 0.5
strength = 500.0

[control]
source = "constant"
value = 1.0
"#,
    )
    .unwrap();
    let out = vctl(&["simulate", "--config", path(&cfg), "--out", path(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_maxwell_oracle_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = vctl(&["validate", "--suite", "maxwell-oracle", "--out", path(dir.path())], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let (header, rows) = read_csv(&dir.path().join("maxwell-oracle.csv"));
    assert_eq!(header, ["nx", "t", "x1", "x2", "oracle", "solver", "abs_err"]);
    assert_eq!(rows.len(), 75);
    let (header, rows) = read_csv(&dir.path().join("maxwell-oracle_checks.csv"));
    assert_eq!(header[0], "check");
    assert!(rows.iter().all(|r| r.last().unwrap() == "true"));
}

#[test]
fn optimize_history_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("twin.toml");
    let out = vctl(&["optimize", "--config", path(&cfg), "--out", path(dir.path())], &[("VCTL_OPTIMIZER__MAX_ITERS", "3")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("history.csv"));
    assert_eq!(header[1], "objective");
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values.len(), 4);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
    let (header, rows) = read_csv(&dir.path().join("control.csv"));
    assert_eq!(header, ["t", "u1", "u2"]);
    assert_eq!(rows.len(), 33);
}

#[test]
fn gradcheck_agrees_with_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("twin.toml");
    let env = [
        ("VCTL_GRADCHECK__DIRECTIONS", "2"),
        ("VCTL_GRADCHECK__EPSILONS", "[1e-2]"),
        ("VCTL_CONTROL__SOURCE", "\"sine\""),
        ("VCTL_CONTROL__AMPLITUDE", "0.3"),
    ];
    let out = vctl(&["gradcheck", "--config", path(&cfg), "--out", path(dir.path())], &env);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("gradcheck.csv"));
    assert_eq!(header, ["direction", "epsilon", "fd_value", "adjoint_value", "rel_err"]);
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r[4].parse::<f64>().unwrap() < 0.02, "{r:?}");
    }
}
