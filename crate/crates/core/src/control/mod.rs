//! Extended systems, transports in `E` and `E*`, and the maximum principle.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algebroid::{product_algebroid, tangent, LocalAlgebroid, FD_STEP};
use crate::dynamics::{
    integrate_segments, integrate_with_counts, rk4_step, write_csv_string, PiecewiseControl,
    SampledPath, Steps,
};
use crate::error::{check_dim, Error, Result};
use crate::problem::{ControlProblem, ControlSet};

/// Relative threshold below which two Hamiltonian values count as tied.
pub const TIE_TOL: f64 = 1e-12;
pub const TOL_SWITCH: f64 = 1e-10;
pub const MAX_SWITCHES: usize = 8;

/// The system on `E x TR` whose last base coordinate accumulates the cost:
/// `f~ = (f, L)` and zero running cost.
pub fn extend_system(problem: &ControlProblem) -> ControlProblem {
    let alg = product_algebroid(problem.alg(), &tangent(1));
    let (n, m) = (problem.alg().n(), problem.alg().m());
    let (f, f_x, cost, cost_x) = problem.parts();
    let (f, f_x, cost, cost_x) = (f.clone(), f_x.cloned(), cost.clone(), cost_x.cloned());
    let map = Arc::new(move |x: &[f64], u: &[f64]| {
        let mut v = f(&x[..n], u);
        v.push(cost(&x[..n], u));
        v
    });
    let base = problem.clone();
    let jac = Arc::new(move |x: &[f64], u: &[f64]| {
        let fx = match &f_x {
            Some(j) => j(&x[..n], u),
            None => base.f_jacobian_fd(&x[..n], u),
        };
        let lx = match &cost_x {
            Some(g) => g(&x[..n], u),
            None => base.cost_gradient_fd(&x[..n], u),
        };
        let mut out = DMatrix::zeros(m + 1, n + 1);
        out.view_mut((0, 0), (m, n)).copy_from(&fx);
        for a in 0..n {
            out[(m, a)] = lx[a];
        }
        out
    });
    ControlProblem::from_parts(
        alg.with_name(format!("{}xTR", problem.alg().name())),
        map,
        Some(jac),
        Arc::new(|_, _| 0.0),
        Some(Arc::new(move |_: &[f64], _: &[f64]| vec![0.0; n + 1])),
        problem.controls().clone(),
    )
}

/// `H = <f(x,u), xi> + xi0 L(x,u)`.
pub fn hamiltonian(problem: &ControlProblem, x: &[f64], xi: &[f64], xi0: f64, u: &[f64]) -> f64 {
    let f = problem.f(x, u);
    let mut h: f64 = f.iter().zip(xi).map(|(a, b)| a * b).sum();
    if xi0 != 0.0 {
        h += xi0 * problem.cost(x, u);
    }
    h
}

/// Result of maximizing the Hamiltonian over the control set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianMax {
    pub u: Vec<f64>,
    pub value: f64,
    /// Margin to the best competing candidate (finite or grid sets).
    pub gap: Option<f64>,
    /// The maximizer is not unique up to the tie tolerance.
    pub degenerate: bool,
    /// Index of the maximizer among the candidates (finite or grid sets).
    pub index: Option<usize>,
}

fn tie_threshold(v: f64) -> f64 {
    TIE_TOL * (1.0 + v.abs())
}

/// Maximizes `H(x, xi, xi0, .)` over `U`; ties go to the earliest candidate.
pub fn maximize_hamiltonian(
    problem: &ControlProblem,
    x: &[f64],
    xi: &[f64],
    xi0: f64,
) -> Result<HamiltonianMax> {
    match problem.controls() {
        ControlSet::Analytic { argmax, .. } => {
            let u = argmax(x, xi, xi0);
            let value = hamiltonian(problem, x, xi, xi0, &u);
            Ok(HamiltonianMax {
                u,
                value,
                gap: None,
                degenerate: false,
                index: None,
            })
        }
        set => {
            let cands = set.grid_points();
            if cands.is_empty() {
                return Err(Error::EmptyControlSet);
            }
            let vals: Vec<f64> = cands
                .iter()
                .map(|u| hamiltonian(problem, x, xi, xi0, u))
                .collect();
            let mut best = 0;
            for (k, v) in vals.iter().enumerate() {
                if *v > vals[best] {
                    best = k;
                }
            }
            let second = vals
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != best)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let gap = if second.is_finite() {
                vals[best] - second
            } else {
                f64::INFINITY
            };
            Ok(HamiltonianMax {
                u: cands[best].clone(),
                value: vals[best],
                gap: Some(gap),
                degenerate: gap <= tie_threshold(vals[best]),
                index: Some(best),
            })
        }
    }
}

/// A path in the fiber of `E` (or `E x TR`) over a sampled base path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberPath {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub segments: Vec<(usize, usize)>,
}

impl FiberPath {
    pub fn end(&self) -> &[f64] {
        self.v.last().unwrap()
    }
}

/// A covector path `(x(t), xi(t))` with the constant multiplier `xi0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostateTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub xi0: f64,
    /// Control value used at each node.
    pub u: Vec<Vec<f64>>,
    /// Hamiltonian at each node with the stored control.
    pub h: Vec<f64>,
    /// Maximization margin at each node, when the control set provides one.
    pub gap: Vec<Option<f64>>,
    pub segments: Vec<(usize, usize)>,
}

impl CostateTrajectory {
    pub fn xi_start(&self) -> &[f64] {
        &self.xi[0]
    }

    pub fn xi_end(&self) -> &[f64] {
        self.xi.last().unwrap()
    }

    /// CSV with columns `t, x_*, xi_*, xi0, H, gap`; an absent gap is left empty.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.x[0].len();
        let m = self.xi[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("xi_{i}")));
        header.extend(["xi0".to_string(), "H".to_string()]);
        let mut rows = Vec::with_capacity(self.t.len());
        for j in 0..self.t.len() {
            let mut row = vec![self.t[j]];
            row.extend_from_slice(&self.x[j]);
            row.extend_from_slice(&self.xi[j]);
            row.extend([self.xi0, self.h[j]]);
            rows.push(row);
        }
        let body = write_csv_string(&header, &rows)?;
        let mut out = String::with_capacity(body.len() + 16 * rows.len());
        for (j, line) in body.lines().enumerate() {
            out.push_str(line);
            if j == 0 {
                out.push_str(",gap");
            } else {
                out.push(',');
                if let Some(g) = self.gap[j - 1] {
                    out.push_str(&crate::dynamics::fmt_num(g));
                }
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn check_layout(u: &PiecewiseControl, path: &SampledPath) -> Result<Vec<usize>> {
    let bp = path.breakpoints();
    if bp.len() != u.breakpoints().len()
        || bp
            .iter()
            .zip(u.breakpoints())
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return Err(Error::InvalidControl(
            "base path segments do not match the control breakpoints".into(),
        ));
    }
    Ok(path.step_counts())
}

/// Right-hand side of the transport equation in `E`:
/// `bdot^i = d_a f^i rho^a_k b^k + c^i_{jk} b^j f^k`.
pub(crate) fn transport_rhs(problem: &ControlProblem, x: &[f64], u: &[f64], b: &[f64]) -> Vec<f64> {
    let alg = problem.alg();
    let f = problem.f(x, u);
    let rb = alg.anchor_apply(x, b);
    let fx = problem.f_jacobian(x, u);
    let mut out = alg.bracket(x).apply(b, &f);
    for (i, o) in out.iter_mut().enumerate() {
        for (a, r) in rb.iter().enumerate() {
            *o += fx[(i, a)] * r;
        }
    }
    out
}

/// Right-hand side of the costate equation:
/// `xidot_k = -rho^a_k (d_a f^i xi_i + xi0 d_a L) + c^i_{jk} f^j xi_i`.
pub(crate) fn costate_rhs(
    problem: &ControlProblem,
    x: &[f64],
    u: &[f64],
    xi: &[f64],
    xi0: f64,
) -> Vec<f64> {
    let alg = problem.alg();
    let (n, m) = (alg.n(), alg.m());
    let f = problem.f(x, u);
    let mut out = alg.bracket(x).coapply(&f, xi);
    if n > 0 {
        let rho = alg.anchor(x);
        let fx = problem.f_jacobian(x, u);
        let lx = if xi0 != 0.0 {
            problem.cost_gradient(x, u)
        } else {
            vec![0.0; n]
        };
        let w: Vec<f64> = (0..n)
            .map(|a| (0..m).map(|i| fx[(i, a)] * xi[i]).sum::<f64>() + xi0 * lx[a])
            .collect();
        for (k, o) in out.iter_mut().enumerate() {
            for a in 0..n {
                *o -= rho[(a, k)] * w[a];
            }
        }
    }
    out
}

/// Transports `b_init` along the controlled trajectory on the grid of `base_path`.
/// The base point is integrated jointly, so it reproduces `base_path` exactly.
pub fn parallel_transport(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    b_init: &[f64],
) -> Result<FiberPath> {
    let counts = check_layout(u, base_path)?;
    let n = problem.alg().n();
    check_dim("transported vector", problem.alg().m(), b_init.len())?;
    let mut y0 = base_path.x_start().to_vec();
    y0.extend_from_slice(b_init);
    let traj = integrate_with_counts(u.breakpoints(), &counts, y0, |k, y| {
        let (x, b) = y.split_at(n);
        let uk = &u.values()[k];
        let mut d = problem.alg().anchor_apply(x, &problem.f(x, uk));
        d.extend(transport_rhs(problem, x, uk, b));
        d
    })?;
    Ok(FiberPath {
        x: traj.y.iter().map(|y| y[..n].to_vec()).collect(),
        v: traj.y.iter().map(|y| y[n..].to_vec()).collect(),
        t: traj.t,
        segments: traj.segments,
    })
}

pub(crate) fn rebuild_costate(
    problem: &ControlProblem,
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    xi0: f64,
    u: Vec<Vec<f64>>,
    segments: Vec<(usize, usize)>,
) -> Result<CostateTrajectory> {
    let mut h = Vec::with_capacity(t.len());
    let mut gap = Vec::with_capacity(t.len());
    for j in 0..t.len() {
        h.push(hamiltonian(problem, &x[j], &xi[j], xi0, &u[j]));
        gap.push(maximize_hamiltonian(problem, &x[j], &xi[j], xi0)?.gap);
    }
    Ok(CostateTrajectory {
        t,
        x,
        xi,
        xi0,
        u,
        h,
        gap,
        segments,
    })
}

/// Transports a covector forward along the trajectory, holding `xi0` constant.
pub fn costate_transport(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    xi_init: &[f64],
    xi0: f64,
) -> Result<CostateTrajectory> {
    let counts = check_layout(u, base_path)?;
    costate_on_counts(problem, u, base_path.x_start(), xi_init, xi0, &counts)
}

fn costate_on_counts(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    x0: &[f64],
    xi_init: &[f64],
    xi0: f64,
    counts: &[usize],
) -> Result<CostateTrajectory> {
    let n = problem.alg().n();
    check_dim("costate", problem.alg().m(), xi_init.len())?;
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(xi_init);
    let traj = integrate_with_counts(u.breakpoints(), counts, y0, |k, y| {
        let (x, xi) = y.split_at(n);
        let uk = &u.values()[k];
        let mut d = problem.alg().anchor_apply(x, &problem.f(x, uk));
        d.extend(costate_rhs(problem, x, uk, xi, xi0));
        d
    })?;
    let mut us = Vec::with_capacity(traj.t.len());
    for (k, &(s, e)) in traj.segments.iter().enumerate() {
        us.extend(std::iter::repeat_n(u.values()[k].clone(), e - s + 1));
    }
    rebuild_costate(
        problem,
        traj.t,
        traj.y.iter().map(|y| y[..n].to_vec()).collect(),
        traj.y.iter().map(|y| y[n..].to_vec()).collect(),
        xi0,
        us,
        traj.segments,
    )
}

/// The matrix of the transport map from `t0` to `t1`; column `i` is the image of `e_i`.
pub fn transport_matrix(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
) -> Result<DMatrix<f64>> {
    let m = problem.alg().m();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let b = parallel_transport(problem, u, base_path, &e)?;
        for (r, v) in b.end().iter().enumerate() {
            out[(r, i)] = *v;
        }
    }
    Ok(out)
}

/// Transports a covector given at `t1` back along the trajectory. The value at
/// `t0` is the transpose of the transport matrix applied to `xi_final`, after
/// which the covector is carried forward so that the pairing is respected.
pub fn costate_transport_backward(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    xi_final: &[f64],
    xi0: f64,
) -> Result<CostateTrajectory> {
    check_dim("costate", problem.alg().m(), xi_final.len())?;
    let b = transport_matrix(problem, u, base_path)?;
    let xi_init = b.transpose() * nalgebra::DVector::from_column_slice(xi_final);
    costate_transport(problem, u, base_path, xi_init.as_slice(), xi0)
}

/// Largest deviation of `<B b_init, B* (xi_init, xi0)>` from its initial value,
/// computed on the extended system so that the cost slot takes part.
/// `b_init` has length `m + 1`.
pub fn pairing_drift(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    b_init: &[f64],
    xi_init: &[f64],
    xi0: f64,
) -> Result<f64> {
    let counts = check_layout(u, base_path)?;
    let ext = extend_system(problem);
    let (n, m) = (problem.alg().n() + 1, problem.alg().m() + 1);
    check_dim("extended vector", m, b_init.len())?;
    check_dim("costate", m - 1, xi_init.len())?;
    let mut y0 = base_path.x_start().to_vec();
    y0.push(0.0);
    y0.extend_from_slice(b_init);
    y0.extend_from_slice(xi_init);
    y0.push(xi0);
    let traj = integrate_with_counts(u.breakpoints(), &counts, y0, |k, y| {
        let x = &y[..n];
        let b = &y[n..n + m];
        let xi = &y[n + m..];
        let uk = &u.values()[k];
        let mut d = ext.alg().anchor_apply(x, &ext.f(x, uk));
        d.extend(transport_rhs(&ext, x, uk, b));
        d.extend(costate_rhs(&ext, x, uk, xi, 0.0));
        d
    })?;
    let pair = |y: &[f64]| -> f64 { (0..m).map(|i| y[n + i] * y[n + m + i]).sum() };
    let p0 = pair(&traj.y[0]);
    Ok(traj
        .y
        .iter()
        .fold(0.0_f64, |w, y| w.max((pair(y) - p0).abs())))
}

/// Checks of the maximum principle along a costate trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct PmpReport {
    /// Largest `sup_U H - H(u(t))` over checked nodes.
    pub max_condition_violation: f64,
    /// Largest `|H(u(t))|` over checked nodes.
    pub h_zero_violation: f64,
    /// Largest defect of the costate equation, from fourth-order differences.
    pub adjoint_residual: f64,
    pub nonvanishing_ok: bool,
    pub min_covector_norm: f64,
    pub checked_nodes: usize,
    pub excluded_nodes: usize,
}

impl PmpReport {
    /// All residuals within `tol`; `require_h_zero` adds the free-horizon condition.
    pub fn passes(&self, tol: f64, require_h_zero: bool) -> bool {
        self.max_condition_violation <= tol
            && self.adjoint_residual <= tol
            && self.nonvanishing_ok
            && (!require_h_zero || self.h_zero_violation <= tol)
    }
}

/// Fourth-order derivative of `v` at node `j` of a uniform segment `[s, e]`
/// with at least five nodes.
pub(crate) fn derivative5(t: &[f64], v: &[Vec<f64>], s: usize, e: usize, j: usize) -> Vec<f64> {
    const W: [[f64; 5]; 5] = [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
        [1.0, -8.0, 0.0, 8.0, -1.0],
        [-1.0, 6.0, -18.0, 10.0, 3.0],
        [3.0, -16.0, 36.0, -48.0, 25.0],
    ];
    let h = (t[e] - t[s]) / (e - s) as f64;
    let w0 = j.saturating_sub(2).max(s).min(e - 4);
    let w = &W[j - w0];
    (0..v[j].len())
        .map(|c| (0..5).map(|q| w[q] * v[w0 + q][c]).sum::<f64>() / (12.0 * h))
        .collect()
}

/// Evaluates the maximum principle along `traj`. Nodes at or next to interior
/// breakpoints are excluded from the maximum and `H = 0` checks.
pub fn pmp_residual_report(
    problem: &ControlProblem,
    traj: &CostateTrajectory,
) -> Result<PmpReport> {
    let nseg = traj.segments.len();
    let mut rep = PmpReport {
        max_condition_violation: 0.0,
        h_zero_violation: 0.0,
        adjoint_residual: 0.0,
        nonvanishing_ok: true,
        min_covector_norm: f64::INFINITY,
        checked_nodes: 0,
        excluded_nodes: 0,
    };
    for (k, &(s, e)) in traj.segments.iter().enumerate() {
        for j in s..=e {
            let norm = traj.xi[j]
                .iter()
                .fold(traj.xi0.abs(), |a, v| a.max(v.abs()));
            rep.min_covector_norm = rep.min_covector_norm.min(norm);
            let near_switch = (k > 0 && j <= s + 1) || (k + 1 < nseg && j + 1 >= e);
            if near_switch {
                rep.excluded_nodes += 1;
                continue;
            }
            rep.checked_nodes += 1;
            let best = maximize_hamiltonian(problem, &traj.x[j], &traj.xi[j], traj.xi0)?;
            let h = hamiltonian(problem, &traj.x[j], &traj.xi[j], traj.xi0, &traj.u[j]);
            rep.max_condition_violation = rep.max_condition_violation.max(best.value - h);
            rep.h_zero_violation = rep.h_zero_violation.max(h.abs());
        }
        if e - s >= 4 {
            for j in s..=e {
                let d = derivative5(&traj.t, &traj.xi, s, e, j);
                let r = costate_rhs(problem, &traj.x[j], &traj.u[j], &traj.xi[j], traj.xi0);
                for (p, q) in d.iter().zip(&r) {
                    rep.adjoint_residual = rep.adjoint_residual.max((p - q).abs());
                }
            }
        }
    }
    rep.nonvanishing_ok = rep.min_covector_norm > 1e-12;
    Ok(rep)
}

/// Whether the terminal time is prescribed or free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum HorizonMode {
    Fixed,
    /// Free terminal time: the covector is rescaled so that `H = 0` initially.
    Free,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtremalOptions {
    /// Grid cells over the horizon.
    pub steps: usize,
    pub tol_switch: f64,
    pub max_switches: usize,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions {
            steps: 400,
            tol_switch: TOL_SWITCH,
            max_switches: MAX_SWITCHES,
        }
    }
}

/// An extremal: its control, costate trajectory and detected switch times.
#[derive(Clone, Debug, Serialize)]
pub struct Extremal {
    pub control: PiecewiseControl,
    pub trajectory: CostateTrajectory,
    pub switches: Vec<f64>,
    /// Factor applied to the covector guess to enforce `H = 0` (free horizon).
    pub scale: f64,
    /// Path of a feedback extremal, whose control is only sampled at nodes.
    feedback_path: Option<SampledPath>,
}

impl Extremal {
    /// The base path (with cost) of the extremal on its own grid.
    pub fn base_path(&self, problem: &ControlProblem) -> Result<SampledPath> {
        if let Some(p) = &self.feedback_path {
            return Ok(p.clone());
        }
        let counts: Vec<usize> = self
            .trajectory
            .segments
            .iter()
            .map(|&(s, e)| e - s)
            .collect();
        let n = problem.alg().n();
        let u = &self.control;
        let mut y0 = self.trajectory.x[0].clone();
        y0.push(0.0);
        let traj = integrate_with_counts(u.breakpoints(), &counts, y0, |k, y| {
            let x = &y[..n];
            let uk = &u.values()[k];
            let mut d = problem.alg().anchor_apply(x, &problem.f(x, uk));
            d.push(problem.cost(x, uk));
            d
        })?;
        let mut a = Vec::with_capacity(traj.t.len());
        for (k, &(s, e)) in traj.segments.iter().enumerate() {
            for y in &traj.y[s..=e] {
                a.push(problem.f(&y[..n], &u.values()[k]));
            }
        }
        Ok(SampledPath {
            x: traj.y.iter().map(|y| y[..n].to_vec()).collect(),
            cost: Some(traj.y.iter().map(|y| y[n]).collect()),
            a: Some(a),
            t: traj.t,
            segments: traj.segments,
        })
    }
}

fn rescale_for_zero_hamiltonian(
    problem: &ControlProblem,
    x0: &[f64],
    xi: &[f64],
    xi0: f64,
) -> Result<f64> {
    let phi = |lam: f64| -> Result<f64> {
        let v: Vec<f64> = xi.iter().map(|c| lam * c).collect();
        Ok(maximize_hamiltonian(problem, x0, &v, xi0)?.value)
    };
    if xi0 == 0.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut grown = 0;
    while phi(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        grown += 1;
        if grown > 200 {
            return Err(Error::InvalidControl(
                "covector guess cannot be rescaled to H = 0".into(),
            ));
        }
    }
    if phi(lo)? > 0.0 {
        return Err(Error::InvalidControl(
            "covector guess cannot be rescaled to H = 0".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integrates the state and costate with `u(t)` chosen to maximize the
/// Hamiltonian. For finite or grid control sets the control is bang-bang with
/// switches located by bisection; for an analytic maximizer it is evaluated at
/// every RK4 stage and reported as a sample-and-hold control on the grid.
pub fn solve_extremal(
    problem: &ControlProblem,
    x0: &[f64],
    xi_guess: &[f64],
    xi0: f64,
    t0: f64,
    t1: f64,
    mode: HorizonMode,
    opts: &ExtremalOptions,
) -> Result<Extremal> {
    if !(xi0 == 0.0 || xi0 == -1.0) {
        return Err(Error::InvalidControl(format!(
            "abnormal multiplier must be 0 or -1, got {xi0}"
        )));
    }
    if !(t1 > t0) {
        return Err(Error::InvalidControl("empty horizon".into()));
    }
    problem.alg().check_point(x0)?;
    check_dim("costate guess", problem.alg().m(), xi_guess.len())?;
    let scale = match mode {
        HorizonMode::Fixed => 1.0,
        HorizonMode::Free => rescale_for_zero_hamiltonian(problem, x0, xi_guess, xi0)?,
    };
    let xi_init: Vec<f64> = xi_guess.iter().map(|v| scale * v).collect();
    match problem.controls() {
        ControlSet::Analytic { argmax, .. } => closed_loop(
            problem,
            argmax.as_ref(),
            x0,
            &xi_init,
            xi0,
            t0,
            t1,
            opts,
            scale,
        ),
        _ => bang_bang(problem, x0, &xi_init, xi0, t0, t1, opts, scale),
    }
}

#[allow(clippy::too_many_arguments)]
fn closed_loop(
    problem: &ControlProblem,
    argmax: &(dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync),
    x0: &[f64],
    xi_init: &[f64],
    xi0: f64,
    t0: f64,
    t1: f64,
    opts: &ExtremalOptions,
    scale: f64,
) -> Result<Extremal> {
    let n = problem.alg().n();
    let m = problem.alg().m();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(xi_init);
    y0.push(0.0);
    let traj = integrate_segments(&[t0, t1], Steps::PerSegment(opts.steps), y0, |_, y| {
        let (x, rest) = y.split_at(n);
        let xi = &rest[..m];
        let u = argmax(x, xi, xi0);
        let mut d = problem.alg().anchor_apply(x, &problem.f(x, &u));
        d.extend(costate_rhs(problem, x, &u, xi, xi0));
        d.push(problem.cost(x, &u));
        d
    })?;
    let x: Vec<Vec<f64>> = traj.y.iter().map(|y| y[..n].to_vec()).collect();
    let xi: Vec<Vec<f64>> = traj.y.iter().map(|y| y[n..n + m].to_vec()).collect();
    let u: Vec<Vec<f64>> = x.iter().zip(&xi).map(|(a, b)| argmax(a, b, xi0)).collect();
    let control = PiecewiseControl::new(traj.t.clone(), u[..u.len() - 1].to_vec())?;
    let feedback_path = SampledPath {
        t: traj.t.clone(),
        x: x.clone(),
        a: Some(x.iter().zip(&u).map(|(xj, uj)| problem.f(xj, uj)).collect()),
        cost: Some(traj.y.iter().map(|y| y[n + m]).collect()),
        segments: traj.segments.clone(),
    };
    let trajectory = rebuild_costate(problem, traj.t, x, xi, xi0, u, traj.segments)?;
    Ok(Extremal {
        control,
        trajectory,
        switches: Vec::new(),
        scale,
        feedback_path: Some(feedback_path),
    })
}

#[allow(clippy::too_many_arguments)]
fn bang_bang(
    problem: &ControlProblem,
    x0: &[f64],
    xi_init: &[f64],
    xi0: f64,
    t0: f64,
    t1: f64,
    opts: &ExtremalOptions,
    scale: f64,
) -> Result<Extremal> {
    const SINGULAR_RUN: usize = 5;
    let n = problem.alg().n();
    let cands = problem.controls().grid_points();
    if cands.is_empty() {
        return Err(Error::EmptyControlSet);
    }
    let h = (t1 - t0) / opts.steps.max(1) as f64;
    let rhs_for = |u: &[f64]| {
        let u = u.to_vec();
        move |y: &[f64]| {
            let (x, xi) = y.split_at(n);
            let mut d = problem.alg().anchor_apply(x, &problem.f(x, &u));
            d.extend(costate_rhs(problem, x, &u, xi, xi0));
            d
        }
    };
    let argmax_at = |y: &[f64]| maximize_hamiltonian(problem, &y[..n], &y[n..], xi0);
    // Margin of the best competitor over the current candidate.
    let advantage = |y: &[f64], cur: usize| -> f64 {
        let hv = |u: &[f64]| hamiltonian(problem, &y[..n], &y[n..], xi0, u);
        let own = hv(&cands[cur]);
        cands
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != cur)
            .map(|(_, u)| hv(u) - own)
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let mut y = x0.to_vec();
    y.extend_from_slice(xi_init);
    let mut t = t0;
    let mut cur = argmax_at(&y)?.index.unwrap_or(0);
    let mut breakpoints = vec![t0];
    let mut values = vec![cands[cur].clone()];
    let mut switches: Vec<f64> = Vec::new();
    let mut degenerate_run = 0;
    while t < t1 - 1e-14 * (1.0 + t1.abs()) {
        let step = h.min(t1 - t);
        let rhs = rhs_for(&cands[cur]);
        let next = rk4_step(&rhs, &y, step);
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > crate::dynamics::OVERFLOW_GUARD)
        {
            return Err(Error::Diverged { t_last: t });
        }
        let tie = tie_threshold(hamiltonian(
            problem,
            &next[..n],
            &next[n..],
            xi0,
            &cands[cur],
        ));
        if advantage(&next, cur) > tie {
            // Locate the crossing inside (t, t + step].
            let (mut lo, mut hi) = (0.0_f64, step);
            while hi - lo > opts.tol_switch {
                let mid = 0.5 * (lo + hi);
                let ym = rk4_step(&rhs, &y, mid);
                if advantage(&ym, cur) > tie {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let ts = t + hi;
            let ys = rk4_step(&rhs, &y, hi);
            let new = argmax_at(&ys)?.index.unwrap_or(0);
            if let Some(&prev) = switches.last() {
                if ts - prev < 10.0 * opts.tol_switch
                    && values.len() >= 2
                    && cands[new] == values[values.len() - 2]
                {
                    return Err(Error::SingularArc(ts));
                }
            }
            let recent = switches.iter().filter(|&&s| s > ts - h).count();
            if recent + 1 > opts.max_switches {
                return Err(Error::Chattering(opts.max_switches));
            }
            switches.push(ts);
            if ts > *breakpoints.last().unwrap() {
                breakpoints.push(ts);
                values.push(cands[new].clone());
            } else {
                *values.last_mut().unwrap() = cands[new].clone();
            }
            cur = new;
            y = ys;
            t = ts;
            continue;
        }
        let m = argmax_at(&next)?;
        degenerate_run = if m.degenerate { degenerate_run + 1 } else { 0 };
        if degenerate_run >= SINGULAR_RUN {
            return Err(Error::SingularArc(t + step));
        }
        y = next;
        t += step;
    }
    breakpoints.push(t1);
    // A switch within tol of t1 would leave an empty last piece.
    if breakpoints.len() >= 3
        && breakpoints[breakpoints.len() - 1] - breakpoints[breakpoints.len() - 2]
            <= opts.tol_switch
    {
        breakpoints.remove(breakpoints.len() - 2);
        values.pop();
        switches.pop();
    }
    let control = PiecewiseControl::new(breakpoints, values)?.simplified();
    let counts: Vec<usize> = control
        .breakpoints()
        .windows(2)
        .map(|w| (((w[1] - w[0]) / h) - 1e-9).ceil().max(8.0) as usize)
        .collect();
    let trajectory = costate_on_counts(problem, &control, x0, xi_init, xi0, &counts)?;
    Ok(Extremal {
        switches: control.breakpoints()[1..control.breakpoints().len() - 1].to_vec(),
        control,
        trajectory,
        scale,
        feedback_path: None,
    })
}

/// Annihilation of boundary subspaces by the covector at the endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct TransversalityReport {
    pub at_start: f64,
    pub at_end: f64,
    pub max: f64,
}

/// Largest `|<v, xi(t0)>|` over `s0` and `|<w, xi(t1)>|` over `s1`. Vectors of
/// length `m + 1` are paired with the extended covector `(xi, xi0)`.
pub fn transversality_check(
    traj: &CostateTrajectory,
    s0: &[Vec<f64>],
    s1: &[Vec<f64>],
) -> Result<TransversalityReport> {
    let pair = |v: &[f64], xi: &[f64]| -> Result<f64> {
        let m = xi.len();
        if v.len() == m {
            Ok(v.iter().zip(xi).map(|(a, b)| a * b).sum())
        } else if v.len() == m + 1 {
            Ok(v[..m].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + v[m] * traj.xi0)
        } else {
            Err(Error::DimensionMismatch {
                what: "boundary subspace vector",
                expected: m,
                found: v.len(),
            })
        }
    };
    let mut at_start: f64 = 0.0;
    for v in s0 {
        at_start = at_start.max(pair(v, traj.xi_start())?.abs());
    }
    let mut at_end: f64 = 0.0;
    for w in s1 {
        at_end = at_end.max(pair(w, traj.xi_end())?.abs());
    }
    Ok(TransversalityReport {
        at_start,
        at_end,
        max: at_start.max(at_end),
    })
}

/// Residual of the morphism conditions for a bundle map `Phi` from `src` to
/// `dst` covering `phi`, at the given points of the source base:
/// `Phi^i_k rho^a_i(phi) = rho~^b_k d_b phi^a` and
/// `rho~_k(Phi^i_l) - rho~_l(Phi^i_k) + c^i_{jq}(phi) Phi^j_k Phi^q_l = Phi^i_j c~^j_{kl}`.
pub fn morphism_residual(
    src: &LocalAlgebroid,
    dst: &LocalAlgebroid,
    phi: &dyn Fn(&[f64]) -> Vec<f64>,
    fiber_map: &dyn Fn(&[f64]) -> DMatrix<f64>,
    samples: &[Vec<f64>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (ns, ms, nd, md) = (src.n(), src.m(), dst.n(), dst.m());
    let h = FD_STEP;
    let mut worst: f64 = 0.0;
    for xt in samples {
        src.check_point(xt)?;
        let y = phi(xt);
        check_dim("base map value", nd, y.len())?;
        let big = fiber_map(xt);
        if big.nrows() != md || big.ncols() != ms {
            return Err(Error::DimensionMismatch {
                what: "fiber map",
                expected: md * ms,
                found: big.nrows() * big.ncols(),
            });
        }
        let mut dphi = DMatrix::zeros(nd, ns);
        let mut dbig = Vec::with_capacity(ns);
        let mut xp = xt.clone();
        for b in 0..ns {
            xp[b] = xt[b] + h;
            let (pu, bu) = (phi(&xp), fiber_map(&xp));
            xp[b] = xt[b] - h;
            let (pd, bd) = (phi(&xp), fiber_map(&xp));
            xp[b] = xt[b];
            for a in 0..nd {
                dphi[(a, b)] = (pu[a] - pd[a]) / (2.0 * h);
            }
            dbig.push((bu - bd) / (2.0 * h));
        }
        let rs = src.anchor(xt);
        let rd = dst.anchor(&y);
        let anchor_res = &rd * &big - &dphi * &rs;
        worst = worst.max(anchor_res.amax());
        let cs = src.bracket(xt);
        let cd = dst.bracket(&y);
        for i in 0..md {
            for k in 0..ms {
                for l in 0..ms {
                    let mut r = 0.0;
                    for b in 0..ns {
                        r += rs[(b, k)] * dbig[b][(i, l)] - rs[(b, l)] * dbig[b][(i, k)];
                    }
                    for j in 0..md {
                        for q in 0..md {
                            r += cd.get(i, j, q) * big[(j, k)] * big[(q, l)];
                        }
                    }
                    for j in 0..ms {
                        r -= big[(i, j)] * cs.get(j, k, l);
                    }
                    worst = worst.max(r.abs());
                }
            }
        }
    }
    Ok(worst)
}

type TimeMap = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;
type TimeCost = Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>;

/// A control system whose dynamics and cost depend explicitly on time.
#[derive(Clone)]
pub struct NonautonomousProblem {
    pub alg: LocalAlgebroid,
    pub f: TimeMap,
    pub cost: TimeCost,
    pub controls: ControlSet,
}

impl NonautonomousProblem {
    pub fn new(
        alg: LocalAlgebroid,
        f: impl Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        cost: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
        controls: ControlSet,
    ) -> Self {
        NonautonomousProblem {
            alg,
            f: Arc::new(f),
            cost: Arc::new(cost),
            controls,
        }
    }
}

/// Autonomous system on `E x TR` with a clock coordinate `z`, `zdot = 1`:
/// `f~(x, z, u) = (f(x, z, u), 1)`, `L~ = L(x, z, u)`. The last covector
/// component is the multiplier `alpha` of the time dependence.
pub fn time_augment(problem: &NonautonomousProblem) -> ControlProblem {
    let n = problem.alg.n();
    let alg = product_algebroid(&problem.alg, &tangent(1));
    let f = problem.f.clone();
    let cost = problem.cost.clone();
    ControlProblem::new(
        alg,
        move |x, u| {
            let mut v = f(&x[..n], x[n], u);
            v.push(1.0);
            v
        },
        move |x, u| cost(&x[..n], x[n], u),
        problem.controls.clone(),
    )
}

/// A function on `E`, used as a Lagrangian. The gradient falls back to central differences.
pub trait Lagrangian {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    /// `(dL/dx, dL/dy)`.
    fn gradient(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = FD_STEP;
        let diff = |v: &[f64], slot: usize| -> Vec<f64> {
            let mut p = v.to_vec();
            (0..v.len())
                .map(|i| {
                    p[i] = v[i] + h;
                    let up = if slot == 0 {
                        self.value(&p, y)
                    } else {
                        self.value(x, &p)
                    };
                    p[i] = v[i] - h;
                    let dn = if slot == 0 {
                        self.value(&p, y)
                    } else {
                        self.value(x, &p)
                    };
                    p[i] = v[i];
                    (up - dn) / (2.0 * h)
                })
                .collect()
        };
        (diff(x, 0), diff(y, 1))
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64> Lagrangian for F {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self(x, y)
    }
}

/// Largest residual of the Euler-Lagrange equations on an algebroid,
/// `xdot^a = rho^a_k y^k` and
/// `d/dt dL/dy^k = c^i_{jk} y^j dL/dy^i + rho^a_k dL/dx^a`,
/// with time derivatives from fourth-order differences on each segment.
pub fn euler_lagrange_residual(
    alg: &LocalAlgebroid,
    lagrangian: &dyn Lagrangian,
    path: &SampledPath,
) -> Result<f64> {
    let y = path.a.as_ref().ok_or(Error::DimensionMismatch {
        what: "fiber samples",
        expected: alg.m(),
        found: 0,
    })?;
    let (n, m) = (alg.n(), alg.m());
    let grads: Vec<(Vec<f64>, Vec<f64>)> = path
        .x
        .iter()
        .zip(y)
        .map(|(x, v)| lagrangian.gradient(x, v))
        .collect();
    let p: Vec<Vec<f64>> = grads.iter().map(|g| g.1.clone()).collect();
    let mut worst: f64 = 0.0;
    for &(s, e) in &path.segments {
        if e - s < 4 {
            continue;
        }
        for j in s..=e {
            let x = &path.x[j];
            let rho = alg.anchor(x);
            if n > 0 {
                let xd = derivative5(&path.t, &path.x, s, e, j);
                let ry = alg.anchor_apply(x, &y[j]);
                for a in 0..n {
                    worst = worst.max((xd[a] - ry[a]).abs());
                }
            }
            let pd = derivative5(&path.t, &p, s, e, j);
            let rhs = alg.bracket(x).coapply(&y[j], &p[j]);
            for k in 0..m {
                let mut r = pd[k] - rhs[k];
                for a in 0..n {
                    r -= rho[(a, k)] * grads[j].0[a];
                }
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst)
}
