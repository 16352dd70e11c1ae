//! End-to-end checks of the command-line interface and its exit codes.

use std::path::Path;
use std::process::Command;

fn chns() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chns"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = "\
[grid]
nx = 16
ny = 16

[physics]
chi = 0.2
alpha = 0.5
c0 = -0.1

[initial]
phi = spinodal
phi_mean = -0.05
phi_amp = 0.05
seed = 9

[stepper]
n_steps = 5

[output]
snapshots = binary
cadence = 5
";

#[test]
fn help_lists_all_commands() {
    let out = chns().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["run", "verify", "elliptic-solve", "convergence"] {
        assert!(text.contains(cmd), "missing {cmd} in --help");
    }
}

#[test]
fn run_produces_diagnostics_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = chns()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let csv_a = std::fs::read(out_a.join("diagnostics.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("diagnostics.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b, "repeated runs must be byte-identical");
    assert!(out_a.join("effective.cfg").exists());
    assert!(out_a.join("phi_00000005.snap").exists());
}

#[test]
fn effective_config_reparses_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), SMALL_RUN);
    let out = dir.path().join("out");
    assert!(chns()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let emitted = std::fs::read_to_string(out.join("effective.cfg")).unwrap();
    let cfg = chns::config::parse_str(&emitted).unwrap();
    assert_eq!(cfg.emit(), emitted);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[physics]\nc0 = 1.5\n");
    let out = chns()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("[H5]"), "stderr should cite the hypothesis: {text}");

    let cfg = write_config(dir.path(), "[initial]\nphi = constant\nphi_value = 1.0\n");
    let out = chns()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn elliptic_solve_round_trips_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    // Constant data ln 3 with theta = 1 gives the constant solution 0.8.
    let grid = chns::grid::Grid::unit(16);
    let f = chns::grid::ScalarField::constant(grid, 3.0f64.ln());
    let input = dir.path().join("f.snap");
    chns::io::write_snapshot(&f, "f", 0.0, chns::io::SnapshotMode::Binary, &input).unwrap();
    let out_dir = dir.path().join("sol");
    let out = chns()
        .args(["elliptic-solve", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"margin\""));
    let snap = chns::io::read_snapshot(&out_dir.join("u.snap")).unwrap();
    for &v in &snap.field.values {
        assert!((v - 0.8).abs() < 1e-9);
    }
    assert!(out_dir.join("elliptic_report.json").exists());
}

#[test]
fn verify_rejects_unknown_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = chns()
        .args(["verify", "no-such-thing", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_list_prints_registry() {
    let out = chns().args(["verify", "all", "--list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in chns::experiments::EXPERIMENT_NAMES {
        assert!(text.contains(name));
    }
}

#[test]
fn verify_single_experiment_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = chns()
        .args(["verify", "elliptic", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("result: PASS"));
    assert!(dir.path().join("elliptic/report.txt").exists());
}
