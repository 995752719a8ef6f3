//! Piecewise-constant controls, fixed-step integration and path algebra.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::algebroid::LocalAlgebroid;
use crate::error::{check_dim, Error, Result};
use crate::problem::{ControlProblem, ControlSet};

/// Solutions whose sup-norm exceeds this are reported as diverged.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Largest base-point mismatch accepted when composing paths.
pub const TOL_JOIN: f64 = 1e-9;
pub const DEFAULT_STEPS: usize = 200;

/// A control holding `values[k]` on `(breakpoints[k], breakpoints[k+1]]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseControl {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidControl(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidControl(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let r = values[0].len();
        if values
            .iter()
            .any(|v| v.len() != r || v.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidControl("inconsistent control values".into()));
        }
        Ok(PiecewiseControl {
            breakpoints,
            values,
        })
    }

    pub fn constant(t0: f64, t1: f64, u: Vec<f64>) -> Result<Self> {
        Self::new(vec![t0, t1], vec![u])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn segments(&self) -> usize {
        self.values.len()
    }

    pub fn t0(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn t1(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Index of the segment whose half-open interval `(s_k, s_{k+1}]` holds `t`;
    /// `t0` belongs to the first segment.
    pub fn segment_of(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&s| s < t);
        k.saturating_sub(1).min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> &[f64] {
        &self.values[self.segment_of(t)]
    }

    /// True when `t` is an interior breakpoint, i.e. a switch of the control.
    pub fn is_breakpoint(&self, t: f64, tol: f64) -> bool {
        self.breakpoints[1..self.breakpoints.len() - 1]
            .iter()
            .any(|s| (s - t).abs() <= tol)
    }

    /// Checks every value against the control set.
    pub fn validate_in(&self, set: &ControlSet) -> Result<()> {
        for v in &self.values {
            if !set.contains(v, 1e-12) {
                return Err(Error::InvalidControl(format!("value {v:?} outside U")));
            }
        }
        Ok(())
    }

    /// The control restricted to `[a, b]`, keeping interior breakpoints.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if !(a < b) || a < self.t0() || b > self.t1() {
            return Err(Error::InvalidControl(format!(
                "cannot restrict [{}, {}] to [{a}, {b}]",
                self.t0(),
                self.t1()
            )));
        }
        let first = self
            .breakpoints
            .partition_point(|&s| s <= a)
            .saturating_sub(1)
            .min(self.values.len() - 1);
        let mut bp = vec![a];
        let mut vals = vec![self.values[first].clone()];
        for (k, &s) in self.breakpoints.iter().enumerate() {
            if s > a && s < b {
                bp.push(s);
                vals.push(self.values[k].clone());
            }
        }
        bp.push(b);
        Self::new(bp, vals)
    }

    /// Merges adjacent segments carrying identical values.
    pub fn simplified(&self) -> Self {
        let mut bp = vec![self.breakpoints[0]];
        let mut vals: Vec<Vec<f64>> = Vec::new();
        for (k, v) in self.values.iter().enumerate() {
            if vals.last() == Some(v) {
                *bp.last_mut().unwrap() = self.breakpoints[k + 1];
            } else {
                vals.push(v.clone());
                bp.push(self.breakpoints[k + 1]);
            }
        }
        PiecewiseControl {
            breakpoints: bp,
            values: vals,
        }
    }
}

/// How many RK4 steps to take on each constant-control segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Steps {
    PerSegment(usize),
    /// Uniform steps no longer than `h`, and at least `min` per segment.
    MaxStep {
        h: f64,
        min: usize,
    },
}

impl Steps {
    pub fn count(&self, len: f64) -> usize {
        match *self {
            Steps::PerSegment(k) => k.max(1),
            Steps::MaxStep { h, min } => ((len / h).ceil() as usize).max(min).max(1),
        }
    }

    /// The same rule with every step halved.
    pub fn refined(&self) -> Self {
        match *self {
            Steps::PerSegment(k) => Steps::PerSegment(2 * k),
            Steps::MaxStep { h, min } => Steps::MaxStep {
                h: h / 2.0,
                min: 2 * min,
            },
        }
    }
}

impl Default for Steps {
    fn default() -> Self {
        Steps::PerSegment(DEFAULT_STEPS)
    }
}

/// Raw solution of an ODE integrated segment by segment. Joint times appear
/// once per adjacent segment.
#[derive(Clone, Debug)]
pub(crate) struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub segments: Vec<(usize, usize)>,
}

pub(crate) fn rk4_step(rhs: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64], h: f64) -> Vec<f64> {
    let k1 = rhs(y);
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = rhs(&y2);
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = rhs(&y3);
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = rhs(&y4);
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn finite_and_bounded(y: &[f64], guard: f64) -> bool {
    y.iter().all(|v| v.is_finite() && v.abs() <= guard)
}

/// Integrates `y' = rhs(k, y)` over the segments of `breakpoints`, where `k` is
/// the segment index.
pub(crate) fn integrate_segments(
    breakpoints: &[f64],
    steps: Steps,
    y0: Vec<f64>,
    rhs: impl Fn(usize, &[f64]) -> Vec<f64>,
) -> Result<Trajectory> {
    let counts: Vec<usize> = breakpoints
        .windows(2)
        .map(|w| steps.count(w[1] - w[0]))
        .collect();
    integrate_with_counts(breakpoints, &counts, y0, rhs)
}

/// As [`integrate_segments`] with an explicit number of steps per segment.
pub(crate) fn integrate_with_counts(
    breakpoints: &[f64],
    counts: &[usize],
    y0: Vec<f64>,
    rhs: impl Fn(usize, &[f64]) -> Vec<f64>,
) -> Result<Trajectory> {
    let mut t = Vec::new();
    let mut ys = Vec::new();
    let mut segments = Vec::new();
    let mut y = y0;
    if !finite_and_bounded(&y, OVERFLOW_GUARD) {
        return Err(Error::Diverged {
            t_last: breakpoints[0],
        });
    }
    for k in 0..breakpoints.len() - 1 {
        let (a, b) = (breakpoints[k], breakpoints[k + 1]);
        let n = counts[k].max(1);
        let h = (b - a) / n as f64;
        let start = t.len();
        t.push(a);
        ys.push(y.clone());
        let f = |z: &[f64]| rhs(k, z);
        for j in 1..=n {
            let next = rk4_step(&f, &y, h);
            if !finite_and_bounded(&next, OVERFLOW_GUARD) {
                return Err(Error::Diverged {
                    t_last: a + (j - 1) as f64 * h,
                });
            }
            y = next;
            t.push(if j == n { b } else { a + j as f64 * h });
            ys.push(y.clone());
        }
        segments.push((start, t.len() - 1));
    }
    Ok(Trajectory { t, y: ys, segments })
}

/// Samples of a base path, optionally with its algebroid velocity `a(t)` and
/// accumulated cost. Each segment has a uniform grid and joint times are
/// stored twice, once per segment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledPath {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub a: Option<Vec<Vec<f64>>>,
    pub cost: Option<Vec<f64>>,
    /// Inclusive node ranges of the segments.
    pub segments: Vec<(usize, usize)>,
}

impl SampledPath {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t[0]
    }

    pub fn t1(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn x_start(&self) -> &[f64] {
        &self.x[0]
    }

    pub fn x_end(&self) -> &[f64] {
        self.x.last().unwrap()
    }

    pub fn cost_end(&self) -> Option<f64> {
        self.cost.as_ref().map(|c| *c.last().unwrap())
    }

    /// Number of steps in each segment.
    pub fn step_counts(&self) -> Vec<usize> {
        self.segments.iter().map(|&(s, e)| e - s).collect()
    }

    /// Breakpoints implied by the segment layout.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self.segments.iter().map(|&(s, _)| self.t[s]).collect();
        bp.push(self.t1());
        bp
    }

    /// CSV with columns `t, x_1..x_n, a_1..a_m, cost` at 12 significant digits.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.x.first().map_or(0, Vec::len);
        let m = self.a.as_ref().and_then(|a| a.first()).map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("a_{i}")));
        if self.cost.is_some() {
            header.push("cost".into());
        }
        let mut rows = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            let mut row = vec![self.t[j]];
            row.extend_from_slice(&self.x[j]);
            if let Some(a) = &self.a {
                row.extend_from_slice(&a[j]);
            }
            if let Some(c) = &self.cost {
                row.push(c[j]);
            }
            rows.push(row);
        }
        write_csv_string(&header, &rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv()?.as_bytes())?;
        Ok(())
    }
}

/// Formats a number with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

pub(crate) fn write_csv_string(header: &[String], rows: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_num(*v)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Integrates `xdot = rho(x) f(x, u(t))` with RK4 on each control segment,
/// accumulating the running cost alongside.
pub fn integrate_base(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    x0: &[f64],
    steps: Steps,
) -> Result<SampledPath> {
    let alg = problem.alg();
    let n = alg.n();
    problem.validate(x0, &u.values[0])?;
    let mut y0 = x0.to_vec();
    y0.push(0.0);
    let traj = integrate_segments(&u.breakpoints, steps, y0, |k, y| {
        let x = &y[..n];
        let uk = &u.values[k];
        let mut d = alg.anchor_apply(x, &problem.f(x, uk));
        d.push(problem.cost(x, uk));
        d
    })?;
    let mut x = Vec::with_capacity(traj.t.len());
    let mut a = Vec::with_capacity(traj.t.len());
    let mut cost = Vec::with_capacity(traj.t.len());
    for (k, &(s, e)) in traj.segments.iter().enumerate() {
        for y in &traj.y[s..=e] {
            x.push(y[..n].to_vec());
            a.push(problem.f(&y[..n], &u.values[k]));
            cost.push(y[n]);
        }
    }
    Ok(SampledPath {
        t: traj.t,
        x,
        a: Some(a),
        cost: Some(cost),
        segments: traj.segments,
    })
}

/// Second-order derivative estimate at node `j` of a possibly non-uniform grid.
pub(crate) fn centered_derivative(t: &[f64], v: &[Vec<f64>], j: usize) -> Vec<f64> {
    let h1 = t[j] - t[j - 1];
    let h2 = t[j + 1] - t[j];
    let w0 = -h2 / (h1 * (h1 + h2));
    let w1 = (h2 - h1) / (h1 * h2);
    let w2 = h1 / (h2 * (h1 + h2));
    (0..v[j].len())
        .map(|i| w0 * v[j - 1][i] + w1 * v[j][i] + w2 * v[j + 1][i])
        .collect()
}

/// Largest `|rho(x) a - xdot|` over nodes interior to segments, with `xdot`
/// from centered differences.
pub fn admissibility_residual(alg: &LocalAlgebroid, path: &SampledPath) -> Result<f64> {
    let a = path.a.as_ref().ok_or(Error::DimensionMismatch {
        what: "fiber samples",
        expected: alg.m(),
        found: 0,
    })?;
    let mut worst: f64 = 0.0;
    for &(s, e) in &path.segments {
        for j in s + 1..e {
            alg.check_point(&path.x[j])?;
            check_dim("fiber sample", alg.m(), a[j].len())?;
            let xd = centered_derivative(&path.t, &path.x, j);
            let ra = alg.anchor_apply(&path.x[j], &a[j]);
            for (p, q) in ra.iter().zip(&xd) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    Ok(worst)
}

/// Inverts a strictly monotone map on `[0, 1]` by bisection.
fn invert_monotone(h: &dyn Fn(f64) -> f64, target: f64, increasing: bool) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let below = if increasing {
            h(mid) < target
        } else {
            h(mid) > target
        };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Reparametrizes a path by a strictly monotone `C^1` map `h: [0,1] -> [t0,t1]`
/// with derivative `dh`: `x~(s) = x(h(s))`, `a~(s) = h'(s) a(h(s))`.
///
/// Every node of the input is mapped to its preimage, so values are carried
/// over exactly and the new grid is generally non-uniform.
pub fn reparametrize(
    path: &SampledPath,
    h: &dyn Fn(f64) -> f64,
    dh: &dyn Fn(f64) -> f64,
) -> Result<SampledPath> {
    const PROBES: usize = 1000;
    let (h0, h1) = (h(0.0), h(1.0));
    let increasing = h1 > h0;
    let mut prev = h0;
    for i in 1..=PROBES {
        let v = h(i as f64 / PROBES as f64);
        if (increasing && v <= prev) || (!increasing && v >= prev) {
            return Err(Error::NonMonotone);
        }
        prev = v;
    }
    for i in 0..=PROBES {
        let d = dh(i as f64 / PROBES as f64);
        if d == 0.0 || (d > 0.0) != increasing {
            return Err(Error::NonMonotone);
        }
    }
    let (lo, hi) = if increasing { (h0, h1) } else { (h1, h0) };
    let tol = 1e-9 * (1.0 + path.t1().abs());
    if (lo - path.t0()).abs() > tol || (hi - path.t1()).abs() > tol {
        return Err(Error::InvalidControl(format!(
            "reparametrization image [{lo}, {hi}] differs from path interval [{}, {}]",
            path.t0(),
            path.t1()
        )));
    }
    let s_of = |j: usize| -> f64 {
        let tj = path.t[j];
        if j == 0 {
            return if increasing { 0.0 } else { 1.0 };
        }
        if j == path.len() - 1 {
            return if increasing { 1.0 } else { 0.0 };
        }
        invert_monotone(h, tj, increasing)
    };
    let order: Vec<usize> = if increasing {
        (0..path.len()).collect()
    } else {
        (0..path.len()).rev().collect()
    };
    let mut t = Vec::with_capacity(path.len());
    let mut x = Vec::with_capacity(path.len());
    let mut a = path.a.as_ref().map(|_| Vec::with_capacity(path.len()));
    let mut cost = path.cost.as_ref().map(|_| Vec::with_capacity(path.len()));
    for &j in &order {
        let s = s_of(j);
        t.push(s);
        x.push(path.x[j].clone());
        if let (Some(out), Some(src)) = (a.as_mut(), path.a.as_ref()) {
            let d = dh(s);
            out.push(src[j].iter().map(|v| d * v).collect());
        }
        if let (Some(out), Some(src)) = (cost.as_mut(), path.cost.as_ref()) {
            out.push(src[j]);
        }
    }
    let last = path.len() - 1;
    let segments = if increasing {
        path.segments.clone()
    } else {
        path.segments
            .iter()
            .rev()
            .map(|&(s, e)| (last - e, last - s))
            .collect()
    };
    Ok(SampledPath {
        t,
        x,
        a,
        cost,
        segments,
    })
}

/// Concatenates two paths whose base points match at the join; the second is
/// shifted in time and its cost offset to continue the first.
pub fn compose(p1: &SampledPath, p2: &SampledPath, tol_join: f64) -> Result<SampledPath> {
    let gap = p1
        .x_end()
        .iter()
        .zip(p2.x_start())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    if p1.x_end().len() != p2.x_start().len() || gap > tol_join {
        return Err(Error::JoinMismatch(gap));
    }
    let shift = p1.t1() - p2.t0();
    let offset = p1.len();
    let mut t = p1.t.clone();
    t.extend(p2.t.iter().map(|v| v + shift));
    let mut x = p1.x.clone();
    x.extend(p2.x.iter().cloned());
    let a = match (&p1.a, &p2.a) {
        (Some(a1), Some(a2)) => Some(a1.iter().chain(a2).cloned().collect()),
        _ => None,
    };
    let cost = match (&p1.cost, &p2.cost) {
        (Some(c1), Some(c2)) => {
            let d = c1.last().unwrap() - c2[0];
            Some(c1.iter().copied().chain(c2.iter().map(|v| v + d)).collect())
        }
        _ => None,
    };
    let mut segments = p1.segments.clone();
    segments.extend(p2.segments.iter().map(|&(s, e)| (s + offset, e + offset)));
    Ok(SampledPath {
        t,
        x,
        a,
        cost,
        segments,
    })
}

/// The constant path at `x` with zero velocity.
pub fn null_path(x: &[f64], m: usize, t0: f64, t1: f64, steps: usize) -> SampledPath {
    let steps = steps.max(1);
    let t: Vec<f64> = (0..=steps)
        .map(|j| t0 + (t1 - t0) * j as f64 / steps as f64)
        .collect();
    let k = t.len();
    SampledPath {
        t,
        x: vec![x.to_vec(); k],
        a: Some(vec![vec![0.0; m]; k]),
        cost: Some(vec![0.0; k]),
        segments: vec![(0, k - 1)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{so3, tangent};
    use crate::problem::ControlSet;

    fn linear_problem(n: usize) -> ControlProblem {
        ControlProblem::new(
            tangent(n),
            |_, u| u.to_vec(),
            |_, _| 1.0,
            ControlSet::Box {
                lo: vec![-5.0; n],
                hi: vec![5.0; n],
                resolution: 3,
            },
        )
    }

    #[test]
    fn segment_lookup_uses_half_open_intervals() {
        let u = PiecewiseControl::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(u.value_at(0.0), &[1.0]);
        assert_eq!(u.value_at(1.0), &[1.0]);
        assert_eq!(u.value_at(1.0 + 1e-12), &[2.0]);
        assert_eq!(u.value_at(2.0), &[2.0]);
    }

    #[test]
    fn restriction_keeps_right_pieces() {
        let u = PiecewiseControl::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![vec![1.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        let r = u.restrict(1.0, 2.5).unwrap();
        assert_eq!(r.breakpoints(), &[1.0, 2.0, 2.5]);
        assert_eq!(r.values(), &[vec![2.0], vec![3.0]]);
        let r = u.restrict(0.5, 0.7).unwrap();
        assert_eq!(r.values(), &[vec![1.0]]);
    }

    #[test]
    fn invalid_controls_rejected() {
        assert!(PiecewiseControl::new(vec![0.0, 0.0], vec![vec![1.0]]).is_err());
        assert!(PiecewiseControl::new(vec![0.0, 1.0], vec![]).is_err());
        let u = PiecewiseControl::constant(0.0, 1.0, vec![2.0]).unwrap();
        assert!(u.validate_in(&ControlSet::Finite(vec![vec![1.0]])).is_err());
    }

    #[test]
    fn linear_flow_reaches_velocity() {
        let p = linear_problem(2);
        let u = PiecewiseControl::constant(0.0, 1.0, vec![0.5, -1.5]).unwrap();
        let path = integrate_base(&p, &u, &[0.0, 0.0], Steps::default()).unwrap();
        assert!((path.x_end()[0] - 0.5).abs() < 1e-13);
        assert!((path.x_end()[1] + 1.5).abs() < 1e-13);
        assert!((path.cost_end().unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn lie_algebra_base_is_frozen() {
        let p = ControlProblem::new(
            so3(),
            |_, u| vec![u[0], 0.0, 1.0],
            |_, _| 0.0,
            ControlSet::Finite(vec![vec![-1.0], vec![1.0]]),
        );
        let u = PiecewiseControl::constant(0.0, 1.0, vec![1.0]).unwrap();
        let path = integrate_base(&p, &u, &[], Steps::PerSegment(10)).unwrap();
        assert!(path.x.iter().all(|x| x.is_empty()));
    }

    #[test]
    fn exponential_growth_and_rk4_order() {
        let p = ControlProblem::new(
            tangent(1),
            |x, _| vec![x[0]],
            |_, _| 0.0,
            ControlSet::Finite(vec![vec![0.0]]),
        );
        let u = PiecewiseControl::constant(0.0, 1.0, vec![0.0]).unwrap();
        let e = std::f64::consts::E;
        let err = |k| {
            (integrate_base(&p, &u, &[1.0], Steps::PerSegment(k))
                .unwrap()
                .x_end()[0]
                - e)
                .abs()
        };
        assert!(err(100) < 1e-8);
        let ratio = err(20) / err(40);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn divergence_reports_last_time() {
        let p = ControlProblem::new(
            tangent(1),
            |x, _| vec![x[0] * x[0]],
            |_, _| 0.0,
            ControlSet::Finite(vec![vec![0.0]]),
        );
        let u = PiecewiseControl::constant(0.0, 2.0, vec![0.0]).unwrap();
        match integrate_base(&p, &u, &[1.0], Steps::PerSegment(400)) {
            Err(Error::Diverged { t_last }) => assert!(t_last > 0.9 && t_last < 1.1, "{t_last}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn admissibility_of_forced_mismatch_and_constants() {
        let alg = tangent(1);
        let mut path = null_path(&[0.0], 1, 0.0, 1.0, 10);
        assert_eq!(admissibility_residual(&alg, &path).unwrap(), 0.0);
        path.x = path.t.iter().map(|t| vec![*t]).collect();
        assert!((admissibility_residual(&alg, &path).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_affine_reparametrizations() {
        let p = linear_problem(1);
        let u = PiecewiseControl::new(vec![0.0, 1.0, 3.0], vec![vec![1.0], vec![-2.0]]).unwrap();
        let path = integrate_base(&p, &u, &[0.0], Steps::PerSegment(8)).unwrap();
        let affine = reparametrize(&path, &|s| 3.0 * s, &|_| 3.0).unwrap();
        for j in 0..path.len() {
            assert!((affine.t[j] * 3.0 - path.t[j]).abs() < 1e-12);
            assert_eq!(affine.x[j], path.x[j]);
            assert_eq!(
                affine.a.as_ref().unwrap()[j][0],
                3.0 * path.a.as_ref().unwrap()[j][0]
            );
        }
        assert!(admissibility_residual(p.alg(), &affine).unwrap() < 1e-10);
        let reversed = reparametrize(&path, &|s| 3.0 - 3.0 * s, &|_| -3.0).unwrap();
        assert_eq!(reversed.x[0], path.x_end().to_vec());
        assert!(admissibility_residual(p.alg(), &reversed).unwrap() < 1e-10);
        assert!(matches!(
            reparametrize(&path, &|s| 3.0 * (2.0 * s - 1.0).powi(2), &|s| 12.0
                * (2.0 * s - 1.0)),
            Err(Error::NonMonotone)
        ));
    }

    #[test]
    fn compose_matches_single_integration() {
        let p = ControlProblem::new(
            tangent(1),
            |x, u| vec![x[0] * u[0]],
            |x, _| x[0],
            ControlSet::Finite(vec![vec![1.0], vec![-1.0]]),
        );
        let whole_u =
            PiecewiseControl::new(vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let whole = integrate_base(&p, &whole_u, &[1.0], Steps::PerSegment(50)).unwrap();
        let first = integrate_base(
            &p,
            &PiecewiseControl::constant(0.0, 0.5, vec![1.0]).unwrap(),
            &[1.0],
            Steps::PerSegment(50),
        )
        .unwrap();
        let second = integrate_base(
            &p,
            &PiecewiseControl::constant(0.0, 0.5, vec![-1.0]).unwrap(),
            first.x_end(),
            Steps::PerSegment(50),
        )
        .unwrap();
        let joined = compose(&first, &second, TOL_JOIN).unwrap();
        assert_eq!(joined.len(), whole.len());
        for j in 0..whole.len() {
            assert!((joined.x[j][0] - whole.x[j][0]).abs() <= 1e-10);
            assert!((joined.t[j] - whole.t[j]).abs() <= 1e-12);
        }
        assert!((joined.cost_end().unwrap() - whole.cost_end().unwrap()).abs() < 1e-10);
        let far = null_path(&[5.0], 1, 0.0, 1.0, 2);
        assert!(matches!(
            compose(&first, &far, TOL_JOIN),
            Err(Error::JoinMismatch(_))
        ));
    }

    #[test]
    fn compose_with_null_path_extends_by_constants() {
        let p = linear_problem(1);
        let path = integrate_base(
            &p,
            &PiecewiseControl::constant(0.0, 1.0, vec![1.0]).unwrap(),
            &[0.0],
            Steps::PerSegment(4),
        )
        .unwrap();
        let ext = compose(&path, &null_path(path.x_end(), 1, 0.0, 1.0, 4), TOL_JOIN).unwrap();
        assert_eq!(ext.t1(), 2.0);
        assert!(ext.x[path.len()..].iter().all(|x| x == path.x_end()));
    }

    #[test]
    fn integration_is_deterministic() {
        let p = linear_problem(2);
        let u = PiecewiseControl::constant(0.0, 1.0, vec![0.3, 0.1]).unwrap();
        let a = integrate_base(&p, &u, &[0.1, 0.2], Steps::default()).unwrap();
        let b = integrate_base(&p, &u, &[0.1, 0.2], Steps::default()).unwrap();
        assert_eq!(a, b);
    }
}
