//! Algebroid homotopies generated by families of admissible paths.
//!
//! A homotopy is a pair `(a, b)` over a base map `x(t, s)` with
//! `d_t b^i - d_s a^i = c^i_{jk}(x) b^j a^k`. Given a family of admissible
//! paths `a(., s)` and initial values `b(t0, s)`, `b` is obtained by integrating
//! that equation in `t`.

use std::path::Path;

use serde::Serialize;

use crate::algebroid::LocalAlgebroid;
use crate::dynamics::{integrate_segments, write_csv_string, PiecewiseControl, Steps};
use crate::error::{check_dim, Error, Result};
use crate::problem::ControlProblem;

/// Default admissibility tolerance for family slices.
pub const TOL_ADM: f64 = 1e-6;
/// Residuals at or below this are treated as exact when checking refinement.
pub const REFINEMENT_FLOOR: f64 = 1e-12;

/// A one-parameter family of admissible paths, evaluated on segment `k` of its
/// time partition so that values at breakpoints are taken from the correct side.
pub trait PathFamily {
    /// `(x(t, s), a(t, s))`.
    fn eval(&self, segment: usize, t: f64, s: f64) -> (Vec<f64>, Vec<f64>);
}

impl<F: Fn(usize, f64, f64) -> (Vec<f64>, Vec<f64>)> PathFamily for F {
    fn eval(&self, segment: usize, t: f64, s: f64) -> (Vec<f64>, Vec<f64>) {
        self(segment, t, s)
    }
}

/// Values of a homotopy on a rectangular grid. `x[i][j]` is the sample at
/// `s[i]`, `t[j]`; the time layout follows [`crate::dynamics::SampledPath`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomotopySheet {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub x: Vec<Vec<Vec<f64>>>,
    pub a: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub segments: Vec<(usize, usize)>,
}

/// The final-point homotopy `s -> b(t1, s)` over `s -> x(t1, s)`.
#[derive(Clone, Debug, Serialize)]
pub struct FinalPointHomotopy {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Sup-norm of `b(t1, .)`. The final-point class is trivial when `b(t1, .)`
    /// vanishes; this number is a proxy, not a decision of class equality.
    pub sup_norm: f64,
}

/// Three-point derivative along a grid, second order, one-sided at the ends.
pub(crate) fn grid_derivative(s: &[f64], v: &[&[f64]], i: usize) -> Vec<f64> {
    let k = s.len();
    let (i0, i1, i2) = if i == 0 {
        (0, 1, 2)
    } else if i == k - 1 {
        (k - 3, k - 2, k - 1)
    } else {
        (i - 1, i, i + 1)
    };
    let (s0, s1, s2) = (s[i0], s[i1], s[i2]);
    let p = s[i];
    // Derivatives of the Lagrange basis polynomials at p.
    let w0 = ((p - s1) + (p - s2)) / ((s0 - s1) * (s0 - s2));
    let w1 = ((p - s0) + (p - s2)) / ((s1 - s0) * (s1 - s2));
    let w2 = ((p - s0) + (p - s1)) / ((s2 - s0) * (s2 - s1));
    (0..v[i].len())
        .map(|c| w0 * v[i0][c] + w1 * v[i1][c] + w2 * v[i2][c])
        .collect()
}

fn check_s_grid(s: &[f64]) -> Result<()> {
    if s.len() < 3 || s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidControl(
            "s-grid needs at least three strictly increasing values".into(),
        ));
    }
    Ok(())
}

/// Admissibility residual of one slice of a family, using a short centered
/// difference of the closed-form base path.
fn slice_admissibility(
    alg: &LocalAlgebroid,
    family: &dyn PathFamily,
    breakpoints: &[f64],
    s: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..breakpoints.len() - 1 {
        let (t0, t1) = (breakpoints[k], breakpoints[k + 1]);
        let d = 1e-5 * (t1 - t0);
        for q in 1..20 {
            let t = t0 + (t1 - t0) * q as f64 / 20.0;
            let (x, a) = family.eval(k, t, s);
            let (xp, _) = family.eval(k, t + d, s);
            let (xm, _) = family.eval(k, t - d, s);
            let ra = alg.anchor_apply(&x, &a);
            for c in 0..ra.len() {
                worst = worst.max((ra[c] - (xp[c] - xm[c]) / (2.0 * d)).abs());
            }
        }
    }
    worst
}

/// Builds a homotopy from an explicit family by integrating
/// `d_t b = d_s a + c(x) b a` with RK4 in `t` for each `s` on `s_grid`.
/// `d_s a` is taken by three-point differences on `s_grid`.
pub fn generate_homotopy(
    alg: &LocalAlgebroid,
    family: &dyn PathFamily,
    b0: &dyn Fn(f64) -> Vec<f64>,
    breakpoints: &[f64],
    s_grid: &[f64],
    steps: Steps,
) -> Result<HomotopySheet> {
    check_s_grid(s_grid)?;
    PiecewiseControl::new(
        breakpoints.to_vec(),
        vec![vec![]; breakpoints.len().saturating_sub(1)],
    )?;
    let m = alg.m();
    for &s in s_grid {
        let r = slice_admissibility(alg, family, breakpoints, s);
        if r > TOL_ADM {
            return Err(Error::NotAdmissible { s, residual: r });
        }
        check_dim("initial homotopy value", m, b0(s).len())?;
    }
    let ds_a = |k: usize, t: f64, i: usize| -> Vec<f64> {
        let lo = if i == 0 {
            0
        } else if i == s_grid.len() - 1 {
            i - 2
        } else {
            i - 1
        };
        let vals: Vec<Vec<f64>> = (lo..lo + 3)
            .map(|q| family.eval(k, t, s_grid[q]).1)
            .collect();
        let local: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
        grid_derivative(&s_grid[lo..lo + 3], &local, i - lo)
    };
    let mut sheet = HomotopySheet {
        t: Vec::new(),
        s: s_grid.to_vec(),
        x: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        segments: Vec::new(),
    };
    for (i, &s) in s_grid.iter().enumerate() {
        // State is (t, b) so that the explicit family can be evaluated at RK4 stages.
        let mut y0 = vec![breakpoints[0]];
        y0.extend(b0(s));
        let traj = integrate_segments(breakpoints, steps, y0, |k, y| {
            let t = y[0];
            let (x, a) = family.eval(k, t, s);
            let da = ds_a(k, t, i);
            let cba = alg.bracket(&x).apply(&y[1..], &a);
            let mut d = vec![1.0];
            d.extend((0..m).map(|c| da[c] + cba[c]));
            d
        })?;
        let mut xs = Vec::with_capacity(traj.t.len());
        let mut as_ = Vec::with_capacity(traj.t.len());
        for (k, &(st, en)) in traj.segments.iter().enumerate() {
            for j in st..=en {
                let (x, a) = family.eval(k, traj.t[j], s);
                xs.push(x);
                as_.push(a);
            }
        }
        if i == 0 {
            sheet.t = traj.t.clone();
            sheet.segments = traj.segments.clone();
        }
        sheet.x.push(xs);
        sheet.a.push(as_);
        sheet
            .b
            .push(traj.y.iter().map(|y| y[1..].to_vec()).collect());
    }
    Ok(sheet)
}

/// Builds the homotopy of a family of controlled trajectories with common
/// control `u` and initial points `x0(s)`, integrating all slices together:
/// `xdot(s) = rho f(x(s), u)`, `d_t b = d_s a + c(x) b a` with `a = f(x, u)`.
pub fn generate_controlled_homotopy(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    x0: &dyn Fn(f64) -> Vec<f64>,
    b0: &dyn Fn(f64) -> Vec<f64>,
    s_grid: &[f64],
    steps: Steps,
) -> Result<HomotopySheet> {
    check_s_grid(s_grid)?;
    let alg = problem.alg();
    let (n, m, ns) = (alg.n(), alg.m(), s_grid.len());
    let mut y0 = Vec::with_capacity(ns * (n + m));
    for &s in s_grid {
        let x = x0(s);
        problem.validate(&x, &u.values()[0])?;
        y0.extend(x);
    }
    for &s in s_grid {
        let b = b0(s);
        check_dim("initial homotopy value", m, b.len())?;
        y0.extend(b);
    }
    let traj = integrate_segments(u.breakpoints(), steps, y0, |k, y| {
        let uk = &u.values()[k];
        let a: Vec<Vec<f64>> = (0..ns)
            .map(|i| problem.f(&y[i * n..(i + 1) * n], uk))
            .collect();
        let a_refs: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let mut d = Vec::with_capacity(y.len());
        for i in 0..ns {
            d.extend(alg.anchor_apply(&y[i * n..(i + 1) * n], &a[i]));
        }
        for i in 0..ns {
            let x = &y[i * n..(i + 1) * n];
            let b = &y[ns * n + i * m..ns * n + (i + 1) * m];
            let da = grid_derivative(s_grid, &a_refs, i);
            let cba = alg.bracket(x).apply(b, &a[i]);
            d.extend((0..m).map(|c| da[c] + cba[c]));
        }
        d
    })?;
    let mut sheet = HomotopySheet {
        t: traj.t.clone(),
        s: s_grid.to_vec(),
        x: vec![Vec::with_capacity(traj.t.len()); ns],
        a: vec![Vec::with_capacity(traj.t.len()); ns],
        b: vec![Vec::with_capacity(traj.t.len()); ns],
        segments: traj.segments.clone(),
    };
    for (k, &(st, en)) in traj.segments.iter().enumerate() {
        for y in &traj.y[st..=en] {
            for i in 0..ns {
                let x = y[i * n..(i + 1) * n].to_vec();
                sheet.a[i].push(problem.f(&x, &u.values()[k]));
                sheet.x[i].push(x);
                sheet.b[i].push(y[ns * n + i * m..ns * n + (i + 1) * m].to_vec());
            }
        }
    }
    Ok(sheet)
}

/// Largest residual of `d_t b - d_s a - c(x) b a` at grid nodes interior in
/// both directions, using centered differences.
pub fn homotopy_residual(alg: &LocalAlgebroid, sheet: &HomotopySheet) -> f64 {
    let ns = sheet.s.len();
    let mut worst: f64 = 0.0;
    for i in 1..ns.saturating_sub(1) {
        for &(st, en) in &sheet.segments {
            for j in st + 1..en {
                let dt_b = crate::dynamics::centered_derivative(&sheet.t, &sheet.b[i], j);
                let col: Vec<&[f64]> = (0..ns).map(|q| sheet.a[q][j].as_slice()).collect();
                let ds_a = grid_derivative(&sheet.s, &col, i);
                let cba = alg
                    .bracket(&sheet.x[i][j])
                    .apply(&sheet.b[i][j], &sheet.a[i][j]);
                for c in 0..alg.m() {
                    worst = worst.max((dt_b[c] - ds_a[c] - cba[c]).abs());
                }
            }
        }
    }
    worst
}

/// Largest `|d_s x - rho(x) b|` over the sheet. It vanishes, up to
/// discretization error, exactly when the algebroid is almost Lie.
pub fn anchor_compatibility_residual(alg: &LocalAlgebroid, sheet: &HomotopySheet) -> f64 {
    let ns = sheet.s.len();
    let mut worst: f64 = 0.0;
    for j in 0..sheet.t.len() {
        let col: Vec<&[f64]> = (0..ns).map(|q| sheet.x[q][j].as_slice()).collect();
        for i in 0..ns {
            let ds_x = grid_derivative(&sheet.s, &col, i);
            let rb = alg.anchor_apply(&sheet.x[i][j], &sheet.b[i][j]);
            for c in 0..alg.n() {
                worst = worst.max((ds_x[c] - rb[c]).abs());
            }
        }
    }
    worst
}

pub fn final_point_homotopy(sheet: &HomotopySheet) -> FinalPointHomotopy {
    let b: Vec<Vec<f64>> = sheet
        .b
        .iter()
        .map(|row| row.last().unwrap().clone())
        .collect();
    let sup_norm = b.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    FinalPointHomotopy {
        s: sheet.s.clone(),
        x: sheet
            .x
            .iter()
            .map(|row| row.last().unwrap().clone())
            .collect(),
        b,
        sup_norm,
    }
}

/// Stacks two sheets in `t`; the second must start where the first ends.
pub fn stack_sheets(
    first: &HomotopySheet,
    second: &HomotopySheet,
    tol: f64,
) -> Result<HomotopySheet> {
    if first.s != second.s {
        return Err(Error::InvalidControl("sheets use different s-grids".into()));
    }
    let mut gap: f64 = 0.0;
    for i in 0..first.s.len() {
        let (xe, be) = (first.x[i].last().unwrap(), first.b[i].last().unwrap());
        for (p, q) in xe
            .iter()
            .zip(&second.x[i][0])
            .chain(be.iter().zip(&second.b[i][0]))
        {
            gap = gap.max((p - q).abs());
        }
    }
    if gap > tol {
        return Err(Error::JoinMismatch(gap));
    }
    let shift = first.t.last().unwrap() - second.t[0];
    let offset = first.t.len();
    let join = |u: &Vec<Vec<Vec<f64>>>, v: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<Vec<f64>>> {
        u.iter()
            .zip(v)
            .map(|(p, q)| p.iter().chain(q).cloned().collect())
            .collect()
    };
    let mut segments = first.segments.clone();
    segments.extend(
        second
            .segments
            .iter()
            .map(|&(s, e)| (s + offset, e + offset)),
    );
    Ok(HomotopySheet {
        t: first
            .t
            .iter()
            .copied()
            .chain(second.t.iter().map(|v| v + shift))
            .collect(),
        s: first.s.clone(),
        x: join(&first.x, &second.x),
        a: join(&first.a, &second.a),
        b: join(&first.b, &second.b),
        segments,
    })
}

/// True when each residual is no larger than the previous one, or already at
/// the round-off floor.
pub fn is_refinement_monotone(residuals: &[f64]) -> bool {
    residuals
        .windows(2)
        .all(|w| w[1] <= w[0] || w[1] <= REFINEMENT_FLOOR)
}

impl HomotopySheet {
    /// CSV with columns `t, s, x_*, a_*, b_*`.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.x[0][0].len();
        let m = self.a[0][0].len();
        let mut header = vec!["t".to_string(), "s".to_string()];
        header.extend((1..=n).map(|c| format!("x_{c}")));
        header.extend((1..=m).map(|c| format!("a_{c}")));
        header.extend((1..=m).map(|c| format!("b_{c}")));
        let mut rows = Vec::new();
        for i in 0..self.s.len() {
            for j in 0..self.t.len() {
                let mut row = vec![self.t[j], self.s[i]];
                row.extend_from_slice(&self.x[i][j]);
                row.extend_from_slice(&self.a[i][j]);
                row.extend_from_slice(&self.b[i][j]);
                rows.push(row);
            }
        }
        write_csv_string(&header, &rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}
