use super::*;
use crate::error::Error;

#[test]
fn registry_lists_all_builtins() {
    let names: Vec<&str> = list_builtins().iter().map(|(n, _)| *n).collect();
    assert!(names.len() >= 6);
    assert!(names.contains(&"chaplygin_sleigh"));
    assert!(names.contains(&"euler_poincare_rigid_body"));
    assert!(matches!(builtin("nope"), Err(Error::UnknownName(_))));
}

#[test]
fn every_builtin_runs_with_defaults() {
    for (name, _) in list_builtins() {
        let out =
            run_scenario(&ScenarioConfig::builtin(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let failed: Vec<_> = out
            .report
            .failed_checks()
            .iter()
            .map(|c| c.name.clone())
            .collect();
        assert!(out.report.passed, "{name}: {failed:?}");
        assert!(out.artifacts.is_empty());
    }
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = ScenarioConfig::builtin("so3_two_axis");
    let a = serde_json::to_string(&run_scenario(&cfg).unwrap().report).unwrap();
    let b = serde_json::to_string(&run_scenario(&cfg).unwrap().report).unwrap();
    assert_eq!(a, b);
}

#[test]
fn so3_has_two_switches_and_a_certificate() {
    let out = run_scenario(&ScenarioConfig::builtin("so3_two_axis")).unwrap();
    assert!(out.report.switches.len() >= 2);
    let cert = out.report.certificate.unwrap();
    assert!(cert.separable);
    assert!(cert.direction_mismatch.unwrap() < 1e-4);
}

#[test]
fn reports_can_be_deselected() {
    let cfg = ScenarioConfig::parse("scenario = tangent_lqr_1d\noutputs.reports = pmp\n").unwrap();
    let rep = run_scenario(&cfg).unwrap().report;
    assert!(rep.pmp.is_some());
    assert!(rep.axioms.is_none() && rep.pairing.is_none() && rep.homotopy.is_none());
}

#[test]
fn artifacts_are_written_per_scenario() {
    let dir = std::env::temp_dir().join(format!("algoc-scenarios-{}", std::process::id()));
    let mut cfg = ScenarioConfig::builtin("wong_residual_circle_bundle");
    cfg.out_dir = Some(dir.clone());
    let out = run_scenario(&cfg).unwrap();
    for p in &out.artifacts {
        assert!(p.starts_with(dir.join("wong_residual_circle_bundle")) && p.is_file());
    }
    let names: Vec<_> = out
        .artifacts
        .iter()
        .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
        .collect();
    assert!(
        names.contains(&"report.json".to_string()) && names.contains(&"trajectory.csv".to_string())
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_parameters_are_config_errors() {
    let cfg = ScenarioConfig::parse("scenario = chaplygin_sleigh\nalgebroid.mass = 2\n").unwrap();
    let err = run_scenario(&cfg).unwrap_err();
    assert!(err.is_usage(), "{err}");
    let cfg = ScenarioConfig::parse("scenario = chaplygin_sleigh\nalgebroid.name = se2\n").unwrap();
    assert!(run_scenario(&cfg).unwrap_err().is_usage());
}

#[test]
fn wong_residual_vanishes_for_uncharged_straight_line() {
    let data = circle_bundle(1.0).unwrap();
    let t: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let path = SampledPath {
        x: t.iter().map(|s| vec![0.5 * s, -0.2 * s]).collect(),
        a: Some(vec![vec![0.5, -0.2]; t.len()]),
        cost: None,
        segments: vec![(0, t.len() - 1)],
        t,
    };
    let zeta = vec![vec![0.0]; path.t.len()];
    let w = wong_residual(&data, &DMatrix::identity(2, 2), &path, &zeta, 1.0).unwrap();
    assert!(w.max < 1e-14);
    let charged = vec![vec![1.0]; path.t.len()];
    assert!(
        wong_residual(&data, &DMatrix::identity(2, 2), &path, &charged, 1.0)
            .unwrap()
            .max
            > 0.1
    );
}

#[test]
#[ignore]
/// Regenerates `tests/golden/lqr_trajectory.csv`.
fn print_golden_lqr() {
    let cfg = ScenarioConfig::parse("scenario = tangent_lqr_1d\nnumerics.steps = 12\n").unwrap();
    print!(
        "{}",
        extremal(&build_scenario(&cfg).unwrap())
            .unwrap()
            .trajectory
            .to_csv()
            .unwrap()
    );
}
