use std::process::Command;

fn algoc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_algoc"));
    c.env_remove("ALGOC_OUT_DIR");
    c
}

#[test]
fn list_names_every_builtin() {
    let out = algoc().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["so3_two_axis", "chaplygin_sleigh", "tangent_lqr_1d", "wong_residual_circle_bundle"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = algoc()
        .args(["run", "--scenario", "tangent_lqr_1d", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let base = dir.path().join("tangent_lqr_1d");
    for f in ["report.json", "trajectory.csv", "path.csv", "homotopy.csv"] {
        assert!(base.join(f).is_file(), "{f} not written");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(base.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = algoc()
        .env("ALGOC_OUT_DIR", dir.path())
        .args(["check-axioms", "--scenario", "chaplygin_sleigh"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("chaplygin_sleigh/report.json").is_file());
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lqr.cfg");
    std::fs::write(
        &cfg,
        "scenario = tangent_lqr_1d\n[problem]\nq = 4\n[horizon]\nt1 = 1.0\n[numerics]\nsteps = 200\n",
    )
    .unwrap();
    let out = algoc().arg("extremal").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("lqr.closed_form"));
}

#[test]
fn impossible_tolerance_exits_one() {
    let out = algoc()
        .args(["pmp-verify", "--scenario", "so3_two_axis", "--tol", "1e-30"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let unknown = algoc().args(["run", "--scenario", "nope"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
    let missing = algoc().arg("run").output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let bad_flag = algoc().args(["run", "--steps", "many"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
    let no_cone = algoc().args(["needle-cone", "--scenario", "tangent_lqr_1d"]).output().unwrap();
    assert_eq!(no_cone.status.code(), Some(2));
}

#[test]
fn diverging_run_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blowup.cfg");
    std::fs::write(&cfg, "scenario = tangent_lqr_1d\nproblem.q = 100\nhorizon.t1 = 50\nnumerics.steps = 2\n").unwrap();
    let out = algoc().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn shipped_configs_pass() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let out = algoc().arg("run").arg("--config").arg(&path).output().unwrap();
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stdout));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
