//! End-to-end runs of the `hetlb` binary.

use std::path::Path;
use std::process::{Command, Output};

use hetlb::analysis::ComparisonReport;
use hetlb::io::{read_file, ComparisonRow, CoupleRow, LyapunovRow, StationaryRow, TrajectoryRow};

fn hetlb(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetlb")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("system.cfg");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn transient_and_stationary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 50\ngammas = 0.2, 0.8\nspeeds = 2.5, 0.625\nbeta = 2\nseed = 3\n");
    let o = hetlb(dir.path(), &["--config", &cfg, "simulate-transient", "--horizon", "2", "--dt", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows): (_, Vec<TrajectoryRow>) = read_file(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(h[0], "t");
    assert_eq!(h.last().unwrap(), "idle_fast");
    assert_eq!(rows.len(), 5);

    let o = hetlb(dir.path(), &["--config", &cfg, "--policy", "jiq", "simulate-stationary", "--duration", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows): (_, Vec<StationaryRow>) = read_file(&dir.path().join("stationary.csv")).unwrap();
    assert_eq!(h, ["functional", "mean", "se", "batches"]);
    assert!(rows.iter().any(|r| r.functional == "y_plus2"));
    assert!(rows.iter().all(|r| r.batches == 20 && r.se >= 0.0));
}

#[test]
fn couple_and_lyapunov_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = hetlb(dir.path(), &["--seed", "4", "--policy", "pod:2", "couple", "--horizon", "5"]);
    assert!(o.status.success());
    let (h, rows): (_, Vec<CoupleRow>) = read_file(&dir.path().join("couple.csv")).unwrap();
    assert_eq!(h, ["t", "U_l", "event_kind", "Q1", "Qp2", "q1t", "q2t"]);
    assert!(rows.iter().all(|r| r.q2t <= r.qp2 && r.q1t + r.q2t <= r.q1 + r.qp2));

    let o = hetlb(dir.path(), &["lyapunov-check", "--grid", "11", "--kappa", "1.5"]);
    assert!(o.status.success());
    let (_, rows): (_, Vec<LyapunovRow>) = read_file(&dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(rows.len(), 121);
}

#[test]
fn sde_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let o = hetlb(dir.path(), &["sde", "--horizon", "1", "--h", "0.01", "--y-m1", "-1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("sde.csv")).unwrap();
    assert!(text.starts_with("t,yM1,y12,u1"));

    let o = hetlb(dir.path(), &["--reps", "2", "compare-policies", "--policies", "sa-jsq,jsq", "--duration", "100"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows): (_, Vec<ComparisonRow>) = read_file(&dir.path().join("comparison.csv")).unwrap();
    let report = ComparisonReport::from_rows(&rows).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.arrivals == report.rows[0].arrivals));

    let o = hetlb(dir.path(), &["--reps", "3", "ssc-sweep", "--ns", "50,100", "--horizon", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ssc.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "pool_sizes = 2, 3\nspeeds = 0.5, 2\nbeta = 1\n");
    assert_eq!(hetlb(dir.path(), &["--config", &bad, "couple"]).status.code(), Some(2));
    let typo = write_config(dir.path(), "speeds = 1\nbeta = 1\nspeed = 2\n");
    assert_eq!(hetlb(dir.path(), &["--config", &typo, "couple"]).status.code(), Some(2));
    assert_eq!(hetlb(dir.path(), &["--reps", "0", "couple"]).status.code(), Some(2));
    assert_eq!(hetlb(dir.path(), &["lyapunov-check", "--kappa", "0.1"]).status.code(), Some(2));
    assert_eq!(hetlb(dir.path(), &["--policy", "pod:0", "couple"]).status.code(), Some(2));
    // A step too large for the tail ODE is an invariant failure.
    let o = hetlb(dir.path(), &["sde", "--h", "2", "--horizon", "4", "--y12", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
