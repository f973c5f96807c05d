//! End-to-end checks of the `stocon` binary: exit codes and output files.

use std::fs;
use std::path::Path;
use std::process::Command;

fn stocon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stocon"))
        .args(args)
        .env_remove("STOCON_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.conf");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const BASE: &str = "scenario = linear_random_gain\nnoise.dist = uniform(0.2, 0.8)\nhorizon.steps = 40\nensemble.paths = 200\nseed = 5\n";

#[test]
fn passing_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &format!("{BASE}analyses = t1, t2\n"));
    let res = stocon(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["ensemble.csv", "verdicts.csv", "report.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let verdicts = fs::read_to_string(out.join("verdicts.csv")).unwrap();
    assert!(verdicts.starts_with("analysis,quantity,estimate,ci_lo,ci_hi,threshold,verdict\n"));
    assert_eq!(verdicts.lines().count(), 3);
}

#[test]
fn failed_verdict_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // E a² = 0.28 for U[0.2, 0.8]; a threshold of 0.1 cannot be certified.
    let cfg = write_config(dir.path(), &format!("{BASE}analyses = t2\nt2.eta = 0.1\n"));
    let res = stocon(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(out.join("report.txt").is_file());
}

#[test]
fn bad_config_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BASE}bogus.key = 3\n"));
    let res = stocon(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 6"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace("horizon.steps = 40", "horizon.steps = 120");
    let cfg = write_config(dir.path(), &format!("{body}analyses = t1, t2, lyapunov, ms-rate\n"));
    let read = |threads: &str| {
        let out = dir.path().join(format!("out{threads}"));
        let res = stocon(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        (
            fs::read(out.join("ensemble.csv")).unwrap(),
            fs::read(out.join("verdicts.csv")).unwrap(),
        )
    };
    assert_eq!(read("1"), read("3"));
}

#[test]
fn lists_every_scenario() {
    let res = stocon(&["list-scenarios"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    for name in ["linear_random_gain", "linear_coarse_grain", "stochastic_gradient", "vdp_coupled", "additive_noise"] {
        assert!(text.contains(name), "missing {name}");
    }
}
