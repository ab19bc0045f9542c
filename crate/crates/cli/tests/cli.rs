use std::path::Path;
use std::process::{Command, Output};

fn stiffmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stiffmod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    stiffmod(&args)
}

#[test]
fn lists_every_preset() {
    let out = stiffmod(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in stiffmod::scenario::preset_names() {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn run_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--scenario", "single-dof", "--scenario", "serial-global", "--t-end", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["single-dof", "serial-global"] {
        for ext in [".csv", ".events.csv", ".toml", ".svg"] {
            assert!(dir.path().join(format!("{name}{ext}")).is_file(), "{name}{ext}");
        }
    }
    let first = std::fs::read(dir.path().join("single-dof.csv")).unwrap();
    let again = tempfile::tempdir().unwrap();
    assert!(run_in(again.path(), &["--scenario", "single-dof", "--t-end", "1"]).status.success());
    assert_eq!(first, std::fs::read(again.path().join("single-dof.csv")).unwrap());
    let header = String::from_utf8(first).unwrap();
    assert!(header.starts_with("t,u1,v1,phase,U,T,E,W,L,L_a,L_s,L_p,Lm1\n"));
}

#[test]
fn format_selects_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["--scenario", "single-dof", "--t-end", "0.5", "--format", "svg"]).status.success());
    assert!(dir.path().join("single-dof.svg").is_file());
    assert!(!dir.path().join("single-dof.csv").exists());
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["--scenario", "single-dof", "--t-end", "0.5", "--format", "csv"]).status.success());
    assert!(!dir.path().join("single-dof.svg").exists());
}

#[test]
fn analyze_reproduces_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["--scenario", "serial-local", "--t-end", "1", "--format", "csv"]).status.success());
    let csv = dir.path().join("serial-local.csv");
    let out = stiffmod(&["analyze", "--in", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("max |L(recomputed) - L(file)| = 0.000e0 J"), "{text}");
}

#[test]
fn scenario_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["--scenario", "coupleable", "--t-end", "0.5", "--format", "csv"]).status.success());
    let toml = dir.path().join("coupleable.toml");
    let again = tempfile::tempdir().unwrap();
    let out = run_in(again.path(), &["--scenario", toml.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("coupleable.csv")).unwrap(),
        std::fs::read(again.path().join("coupleable.csv")).unwrap()
    );
}

#[test]
fn failures_give_one_line_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"bad\"\npreset = \"single-dof\"\ncolour = 3\n").unwrap();
    for args in [
        vec!["run", "--scenario", "no-such-preset"],
        vec!["run", "--scenario", bad.to_str().unwrap()],
        vec!["run", "--scenario", "single-dof", "--dt=-1"],
        vec!["run", "--scenario", "single-dof", "--format", "pdf"],
        vec!["analyze", "--in", "/nonexistent/traj.csv", "--scenario", "single-dof"],
    ] {
        let out = stiffmod(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}
