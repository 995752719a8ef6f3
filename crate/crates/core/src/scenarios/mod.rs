//! Builtin scenarios, configuration files and the end-to-end pipeline.

mod builtins;
mod config;
mod wong;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

pub use builtins::{
    atiyah_field_mismatch, build_scenario, builtin, builtin_info, circle_bundle, crosscheck_atiyah,
    list_builtins, lqr_closed_form, BuiltinInfo, ChaplyginParams, Scenario, ScenarioKind, BUILTINS,
};
pub use config::{ScenarioConfig, REPORT_NAMES};
pub use wong::{wong_residual, WongReport};

use crate::algebroid::{check_almost_lie, check_jacobi, check_skew, halton, AxiomReport};
use crate::control::{
    derivative5, euler_lagrange_residual, pairing_drift, pmp_residual_report, solve_extremal,
    transport_matrix, transversality_check, Extremal, ExtremalOptions, HorizonMode, PmpReport,
};
use crate::dynamics::{integrate_base, write_csv_string, SampledPath, Steps};
use crate::error::{Error, Result};
use crate::homotopy::{
    anchor_compatibility_residual, generate_controlled_homotopy, is_refinement_monotone,
    HomotopySheet,
};
use crate::needle::{
    default_anchor_time, direction_mismatch, pmp_certificate, CertificateOptions, GeneratorSource,
    PmpCertificate,
};
use crate::problem::ControlSet;

/// Points used by the axiom checks; the sequence is the Halton sequence.
pub const AXIOM_SAMPLES: usize = 64;
pub const DRIFT_TOL: f64 = 1e-8;
/// Drift below this is indistinguishable from rounding.
pub const DRIFT_FLOOR: f64 = 1e-13;
pub const CROSSCHECK_POINTS: usize = 1000;
pub const HOMOTOPY_LEVELS: usize = 3;

/// One pass/fail threshold of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub bound: &'static str,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            bound: "<=",
            pass: value <= threshold,
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            bound: ">=",
            pass: value >= threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomSummary {
    pub skew: AxiomReport,
    pub almost_lie: AxiomReport,
    pub jacobi: AxiomReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingReport {
    pub drift: f64,
    pub drift_refined: f64,
    /// `drift / drift_refined`; `None` when both are at rounding level.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub tau: f64,
    pub generators: usize,
    pub separable: bool,
    pub phi: Option<Vec<f64>>,
    pub min_margin: f64,
    pub violated: Option<GeneratorSource>,
    /// Distance to the extremal costate direction at `t1`.
    pub direction_mismatch: Option<f64>,
    pub pmp: Option<PmpReport>,
}

/// Everything a run measured.
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub description: String,
    pub algebroid: String,
    pub sampling: String,
    pub horizon: [f64; 2],
    pub steps: usize,
    pub tol: f64,
    pub axioms: Option<AxiomSummary>,
    pub switches: Vec<f64>,
    pub scale: Option<f64>,
    pub pmp: Option<PmpReport>,
    pub pairing: Option<PairingReport>,
    pub homotopy: Option<Vec<f64>>,
    pub certificate: Option<CertificateSummary>,
    /// Scenario-specific measurements.
    pub details: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ScenarioReport {
    fn new(sc: &Scenario) -> Self {
        ScenarioReport {
            scenario: sc.name().to_string(),
            description: sc.info.description.to_string(),
            algebroid: sc.problem.alg().name().to_string(),
            sampling: format!("halton, {AXIOM_SAMPLES} points"),
            horizon: [sc.t0, sc.t1],
            steps: sc.steps,
            tol: sc.tol,
            axioms: None,
            switches: Vec::new(),
            scale: None,
            pmp: None,
            pairing: None,
            homotopy: None,
            certificate: None,
            details: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    fn push(&mut self, c: Check) {
        self.passed &= c.pass;
        self.checks.push(c);
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Pipeline stages, selectable one at a time or all together.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Axioms,
    Simulate,
    Transport,
    Extremal,
    PmpVerify,
    NeedleCone,
    All,
}

/// Report and written files of a run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: ScenarioReport,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the full pipeline of the configured scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    run_stage(cfg, Stage::All)
}

/// Runs one stage (with whatever it depends on) and writes its artifacts to
/// `cfg.out_dir/<scenario>` when an output directory is set.
pub fn run_stage(cfg: &ScenarioConfig, stage: Stage) -> Result<RunOutcome> {
    let sc = build_scenario(cfg).map_err(|e| e.in_stage("config"))?;
    let mut rep = ScenarioReport::new(&sc);
    let mut files: Vec<(String, String)> = Vec::new();
    let all = stage == Stage::All;

    if (all && cfg.wants("axioms")) || stage == Stage::Axioms {
        let ax = axiom_summary(&sc).map_err(|e| e.in_stage("axioms"))?;
        rep.push(Check::at_most(
            "axioms.skew",
            ax.skew.max_violation,
            ax.skew.tolerance,
        ));
        rep.push(Check::at_most(
            "axioms.almost_lie",
            ax.almost_lie.max_violation,
            ax.almost_lie.tolerance,
        ));
        rep.axioms = Some(ax);
        if let ScenarioKind::AtiyahCrosscheck { data, potential } = &sc.kind {
            let pts = crosscheck_points(&sc, CROSSCHECK_POINTS);
            let d =
                atiyah_field_mismatch(data, *potential, &pts).map_err(|e| e.in_stage("axioms"))?;
            rep.details.insert("hamiltonian_field_mismatch".into(), d);
            rep.push(Check::at_most("atiyah.hamiltonian_field", d, 1e-10));
        }
    }
    if stage == Stage::Axioms {
        return finish(cfg, &sc, rep, files);
    }

    let ex = extremal(&sc).map_err(|e| e.in_stage("extremal"))?;
    rep.switches = ex.switches.clone();
    rep.scale = Some(ex.scale);
    let path = ex
        .base_path(&sc.problem)
        .map_err(|e| e.in_stage("simulate"))?;
    if (all && cfg.wants("trajectory")) || stage == Stage::Simulate {
        files.push(("path.csv".into(), path.to_csv()?));
    }
    if all || stage == Stage::Extremal {
        if cfg.wants("trajectory") || !all {
            files.push(("trajectory.csv".into(), ex.trajectory.to_csv()?));
        }
        scenario_checks(&sc, &ex, &path, &mut rep).map_err(|e| e.in_stage("residuals"))?;
    }
    if (all && cfg.wants("pmp")) || stage == Stage::PmpVerify || stage == Stage::Extremal {
        let pmp =
            pmp_residual_report(&sc.problem, &ex.trajectory).map_err(|e| e.in_stage("pmp"))?;
        rep.push(Check::at_most(
            "pmp.maximum_condition",
            pmp.max_condition_violation,
            sc.tol,
        ));
        rep.push(Check::at_most("pmp.adjoint", pmp.adjoint_residual, sc.tol));
        rep.push(Check::at_least(
            "pmp.nontrivial",
            pmp.min_covector_norm,
            1e-12,
        ));
        if sc.mode == HorizonMode::Free {
            rep.push(Check::at_most(
                "pmp.hamiltonian_zero",
                pmp.h_zero_violation,
                sc.tol,
            ));
        }
        rep.pmp = Some(pmp);
    }
    if (all && cfg.wants("pairing")) || stage == Stage::Transport {
        let pr = pairing_report(&sc, &ex).map_err(|e| e.in_stage("transport"))?;
        rep.push(Check::at_most("pairing.drift", pr.drift, DRIFT_TOL));
        rep.pairing = Some(pr);
        if stage == Stage::Transport {
            let b = transport_matrix(&sc.problem, &ex.control, &path)
                .map_err(|e| e.in_stage("transport"))?;
            let rows: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
            let header: Vec<String> = (1..=b.ncols()).map(|j| format!("col_{j}")).collect();
            files.push(("transport.csv".into(), write_csv_string(&header, &rows)?));
        }
    }
    if all && cfg.wants("homotopy") && sc.problem.alg().n() > 0 {
        let (res, sheet) =
            homotopy_refinement(&sc, &ex, HOMOTOPY_LEVELS).map_err(|e| e.in_stage("homotopy"))?;
        rep.push(Check {
            name: "homotopy.refinement_monotone".into(),
            value: res.last().copied().unwrap_or(0.0),
            threshold: res.first().copied().unwrap_or(0.0),
            bound: "<=",
            pass: is_refinement_monotone(&res),
        });
        rep.homotopy = Some(res);
        files.push(("homotopy.csv".into(), sheet.to_csv()?));
    }
    let finite = !matches!(sc.problem.controls(), ControlSet::Analytic { .. });
    if stage == Stage::NeedleCone && !finite {
        return Err(Error::Config(format!(
            "{}: the needle cone needs a finite or box control set",
            sc.name()
        ))
        .in_stage("needle-cone"));
    }
    if ((all && cfg.wants("cone")) || stage == Stage::NeedleCone) && finite {
        let cert = certificate(&sc, &ex, &path).map_err(|e| e.in_stage("needle-cone"))?;
        let summary = summarize_certificate(&sc, &ex, &cert);
        rep.push(Check {
            name: "cone.separable".into(),
            value: summary.min_margin,
            threshold: -crate::needle::TOL_SEPARATION,
            bound: ">=",
            pass: summary.separable && summary.min_margin >= -crate::needle::TOL_SEPARATION,
        });
        if let Some(d) = summary.direction_mismatch {
            rep.push(Check::at_most("cone.costate_direction", d, 1e-4));
        }
        files.push(("cone.csv".into(), cone_csv(&cert)?));
        rep.certificate = Some(summary);
    }
    finish(cfg, &sc, rep, files)
}

fn finish(
    cfg: &ScenarioConfig,
    sc: &Scenario,
    report: ScenarioReport,
    files: Vec<(String, String)>,
) -> Result<RunOutcome> {
    let mut artifacts = Vec::new();
    if let Some(dir) = &cfg.out_dir {
        let dir = dir.join(sc.name());
        std::fs::create_dir_all(&dir)?;
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            artifacts.push(p);
        }
        let p = dir.join("report.json");
        std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?;
        artifacts.push(p);
    }
    Ok(RunOutcome { report, artifacts })
}

/// Axiom residuals on the fixed Halton sample of the scenario's algebroid.
pub fn axiom_summary(sc: &Scenario) -> Result<AxiomSummary> {
    let alg = sc.problem.alg();
    let pts = alg.sample_points(AXIOM_SAMPLES);
    let pts = if pts.is_empty() {
        vec![Vec::new()]
    } else {
        pts
    };
    Ok(AxiomSummary {
        skew: check_skew(alg, &pts)?,
        almost_lie: check_almost_lie(alg, &pts)?,
        jacobi: check_jacobi(alg, &pts)?,
    })
}

fn crosscheck_points(sc: &Scenario, count: usize) -> Vec<Vec<f64>> {
    let d = sc.problem.alg().n() + sc.problem.alg().m();
    (1..=count)
        .map(|i| halton(i, d).iter().map(|v| 4.0 * v - 2.0).collect())
        .collect()
}

/// The scenario's extremal at its configured resolution.
pub fn extremal(sc: &Scenario) -> Result<Extremal> {
    solve_extremal(
        &sc.problem,
        &sc.x0,
        &sc.xi,
        sc.xi0,
        sc.t0,
        sc.t1,
        sc.mode,
        &ExtremalOptions {
            steps: sc.steps,
            ..Default::default()
        },
    )
}

/// Base grid step of an extremal.
fn base_step(sc: &Scenario) -> f64 {
    (sc.t1 - sc.t0) / sc.steps as f64
}

/// Pairing drift along the extremal at the default step and at half of it.
pub fn pairing_report(sc: &Scenario, ex: &Extremal) -> Result<PairingReport> {
    let steps = match sc.problem.controls() {
        ControlSet::Analytic { .. } => Steps::PerSegment(1),
        _ => Steps::MaxStep {
            h: base_step(sc),
            min: 4,
        },
    };
    let b = sc.pairing_vector();
    let xi0 = ex.trajectory.xi_start().to_vec();
    let drift_at = |steps: Steps| -> Result<f64> {
        let path = integrate_base(&sc.problem, &ex.control, &sc.x0, steps)?;
        pairing_drift(&sc.problem, &ex.control, &path, &b, &xi0, sc.xi0)
    };
    let drift = drift_at(steps)?;
    let drift_refined = drift_at(steps.refined())?;
    let ratio = (drift > DRIFT_FLOOR).then(|| drift / drift_refined);
    Ok(PairingReport {
        drift,
        drift_refined,
        ratio,
    })
}

/// Anchor-compatibility residuals of homotopies generated around the extremal
/// at successively halved `s` spacing and time step, with the finest sheet.
pub fn homotopy_refinement(
    sc: &Scenario,
    ex: &Extremal,
    levels: usize,
) -> Result<(Vec<f64>, HomotopySheet)> {
    let alg = sc.problem.alg();
    let n = alg.n();
    let dir: Vec<f64> = (0..n).map(|i| (-0.5_f64).powi(i as i32)).collect();
    let x0 = sc.x0.clone();
    let (d1, d2) = (dir.clone(), dir.clone());
    let start =
        move |s: f64| -> Vec<f64> { x0.iter().zip(&d1).map(|(x, d)| x + s.sin() * d).collect() };
    let start2 = start.clone();
    let b0 = move |s: f64| -> Vec<f64> {
        let v: Vec<f64> = d2.iter().map(|d| s.cos() * d).collect();
        builtins::anchor_preimage(alg, &start2(s), &v)
    };
    let per_piece = match sc.problem.controls() {
        ControlSet::Analytic { .. } => 1,
        _ => 0,
    };
    let mut res = Vec::with_capacity(levels);
    let mut last = None;
    for level in 0..levels {
        let k = 1usize << level;
        let s_grid: Vec<f64> = (0..=4 * k)
            .map(|i| 0.2 * i as f64 / (4 * k) as f64)
            .collect();
        let steps = if per_piece > 0 {
            Steps::PerSegment(k)
        } else {
            Steps::MaxStep {
                h: base_step(sc) / k as f64,
                min: 4 * k,
            }
        };
        let sheet =
            generate_controlled_homotopy(&sc.problem, &ex.control, &start, &b0, &s_grid, steps)?;
        res.push(anchor_compatibility_residual(alg, &sheet));
        last = Some(sheet);
    }
    Ok((res, last.expect("at least one level")))
}

/// Needle-cone certificate of the extremal at the last regular grid node.
pub fn certificate(sc: &Scenario, ex: &Extremal, path: &SampledPath) -> Result<PmpCertificate> {
    let tau = default_anchor_time(&ex.control, path)?;
    pmp_certificate(
        &sc.problem,
        &ex.control,
        path,
        tau,
        &CertificateOptions::default(),
    )
}

fn summarize_certificate(
    sc: &Scenario,
    ex: &Extremal,
    cert: &PmpCertificate,
) -> CertificateSummary {
    let mut want = ex.trajectory.xi_end().to_vec();
    want.push(sc.xi0);
    let sep = &cert.separation;
    CertificateSummary {
        tau: cert.tau,
        generators: cert.cone.len(),
        separable: sep.separable,
        phi: cert.phi.clone(),
        min_margin: sep.margins.iter().copied().fold(f64::INFINITY, f64::min),
        violated: cert.violated_generator().map(|(_, s)| s.clone()),
        direction_mismatch: cert.phi.as_ref().map(|p| direction_mismatch(p, &want)),
        pmp: cert.report.clone(),
    }
}

fn cone_csv(cert: &PmpCertificate) -> Result<String> {
    let d = cert.cone.dim().unwrap_or(0);
    let mut header = vec![
        "kind".to_string(),
        "time_or_sign".to_string(),
        "control".to_string(),
    ];
    header.extend((1..=d).map(|i| format!("g_{i}")));
    header.push("margin".into());
    let rows: Vec<Vec<f64>> = cert
        .cone
        .generators
        .iter()
        .zip(&cert.cone.provenance)
        .zip(&cert.separation.margins)
        .map(|((g, src), mg)| {
            let (kind, p, v) = match src {
                GeneratorSource::Needle { tau, v } => {
                    (0.0, *tau, v.first().copied().unwrap_or(0.0))
                }
                GeneratorSource::Time { sign } => (1.0, *sign, 0.0),
                GeneratorSource::Subspace { index, sign } => (2.0, *sign, *index as f64),
            };
            let mut row = vec![kind, p, v];
            row.extend_from_slice(g);
            row.push(*mg);
            row
        })
        .collect();
    write_csv_string(&header, &rows)
}

/// Residuals specific to each builtin.
fn scenario_checks(
    sc: &Scenario,
    ex: &Extremal,
    path: &SampledPath,
    rep: &mut ScenarioReport,
) -> Result<()> {
    let tr = &ex.trajectory;
    match &sc.kind {
        ScenarioKind::So3TwoAxis { b, .. } => {
            let mismatches = so3_sign_mismatches(tr, b, &ex.control);
            rep.details
                .insert("switches".into(), ex.switches.len() as f64);
            rep.push(Check::at_most(
                "so3.sign_mismatches",
                mismatches as f64,
                0.0,
            ));
        }
        ScenarioKind::Chaplygin(p) => {
            let (stat, eom) = chaplygin_residuals(p, tr);
            rep.details.insert(
                "orthogonality_defect".into(),
                crate::algebroid::frame_orthogonality_defect(&p.metric(), &p.frame(), 2),
            );
            rep.push(Check::at_most("chaplygin.stationarity", stat, 1e-12));
            rep.push(Check::at_most("chaplygin.equations_of_motion", eom, sc.tol));
        }
        ScenarioKind::EulerPoincare { inertia } => {
            let (energy, casimir) = rigid_body_drifts(inertia, tr);
            let inertia = inertia.clone();
            let lag = move |_: &[f64], y: &[f64]| {
                0.5 * (0..3).map(|k| inertia[k] * y[k] * y[k]).sum::<f64>()
            };
            let el = euler_lagrange_residual(sc.problem.alg(), &lag, path)?;
            rep.push(Check::at_most(
                "euler_poincare.energy_drift",
                energy,
                sc.tol,
            ));
            rep.push(Check::at_most(
                "euler_poincare.casimir_drift",
                casimir,
                sc.tol,
            ));
            rep.push(Check::at_most("euler_poincare.euler_lagrange", el, sc.tol));
        }
        ScenarioKind::AtiyahCrosscheck { .. } => {
            let spread = hamiltonian_spread(tr);
            rep.push(Check::at_most(
                "atiyah.hamiltonian_constant",
                spread,
                sc.tol,
            ));
        }
        ScenarioKind::TangentLqr { q, r } => {
            let mut err: f64 = 0.0;
            for j in 0..tr.t.len() {
                let (x, xi) = lqr_closed_form(*q, *r, sc.x0[0], sc.t1 - sc.t0, tr.t[j] - sc.t0);
                err = err
                    .max((tr.x[j][0] - x).abs())
                    .max((tr.xi[j][0] - xi).abs());
            }
            let tv = transversality_check(tr, &[], &[vec![1.0]])?;
            rep.push(Check::at_most("lqr.closed_form", err, sc.tol));
            rep.push(Check::at_most("lqr.transversality", tv.max, sc.tol));
        }
        ScenarioKind::Wong { data, .. } => {
            let zeta: Vec<Vec<f64>> = tr.xi.iter().map(|v| v[2..].to_vec()).collect();
            let w = wong_residual(data, &DMatrix::identity(2, 2), path, &zeta, -sc.xi0)?;
            rep.details.insert("wong.force".into(), w.force_residual);
            rep.details.insert("wong.charge".into(), w.charge_residual);
            rep.push(Check::at_most("wong.residual", w.max, sc.tol));
        }
    }
    Ok(())
}

/// Interior nodes whose control differs from `sgn <xi, b>`.
pub fn so3_sign_mismatches(
    tr: &crate::control::CostateTrajectory,
    b: &[f64],
    u: &crate::dynamics::PiecewiseControl,
) -> usize {
    let tol = 1e-12 * (1.0 + u.t1().abs());
    (0..tr.t.len())
        .filter(|&j| {
            let t = tr.t[j];
            t > u.t0() && t < u.t1() && !u.is_breakpoint(t, tol)
        })
        .filter(|&j| {
            let s: f64 = tr.xi[j].iter().zip(b).map(|(x, y)| x * y).sum();
            s.signum() != tr.u[j][0]
        })
        .count()
}

/// Stationarity `xi = M y` and the reduced equations `M ydot = (-ma y1 y2, ma y1^2)`.
pub fn chaplygin_residuals(
    p: &ChaplyginParams,
    tr: &crate::control::CostateTrajectory,
) -> (f64, f64) {
    let mm = p.mass_matrix();
    let mut stat: f64 = 0.0;
    for (xi, y) in tr.xi.iter().zip(&tr.u) {
        stat = stat
            .max((xi[0] - (mm[(0, 0)] * y[0] + mm[(0, 1)] * y[1])).abs())
            .max((xi[1] - (mm[(1, 0)] * y[0] + mm[(1, 1)] * y[1])).abs());
    }
    let mut eom: f64 = 0.0;
    for &(s, e) in &tr.segments {
        for j in s..=e {
            let yd = derivative5(&tr.t, &tr.u, s, e, j);
            let rhs = p.eom_rhs(&tr.u[j]);
            for r in 0..2 {
                let lhs = mm[(r, 0)] * yd[0] + mm[(r, 1)] * yd[1];
                eom = eom.max((lhs - rhs[r]).abs());
            }
        }
    }
    (stat, eom)
}

/// Drifts of the kinetic energy and of `|xi|^2` along a rigid-body costate.
pub fn rigid_body_drifts(inertia: &[f64], tr: &crate::control::CostateTrajectory) -> (f64, f64) {
    let energy = |xi: &[f64]| 0.5 * (0..3).map(|k| xi[k] * xi[k] / inertia[k]).sum::<f64>();
    let casimir = |xi: &[f64]| xi.iter().map(|v| v * v).sum::<f64>();
    let (e0, c0) = (energy(&tr.xi[0]), casimir(&tr.xi[0]));
    tr.xi.iter().fold((0.0_f64, 0.0_f64), |(a, b), xi| {
        (
            a.max((energy(xi) - e0).abs()),
            b.max((casimir(xi) - c0).abs()),
        )
    })
}

fn hamiltonian_spread(tr: &crate::control::CostateTrajectory) -> f64 {
    tr.h.iter().fold(0.0_f64, |w, h| w.max((h - tr.h[0]).abs()))
}

/// Resolves the output directory: explicit value, else `ALGOC_OUT_DIR`.
pub fn resolve_out_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("ALGOC_OUT_DIR").map(PathBuf::from))
}

#[cfg(test)]
mod tests;
