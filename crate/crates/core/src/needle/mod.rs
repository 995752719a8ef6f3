//! Needle variations of controls, cones of infinitesimal variations and their
//! separation from the cost-decreasing ray.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::{
    costate_transport_backward, extend_system, pmp_residual_report, CostateTrajectory, PmpReport,
};
use crate::dynamics::{integrate_with_counts, PiecewiseControl, SampledPath};
use crate::error::{check_dim, Error, Result};
use crate::problem::{ControlProblem, ControlSet};

/// Slack allowed in the separation inequalities.
pub const TOL_SEPARATION: f64 = 1e-9;

/// Replace the control by `v` on an interval of length `s * dt` ending near `tau`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeedleEntry {
    pub tau: f64,
    pub v: Vec<f64>,
    pub dt: f64,
}

/// Data `(tau_i, v_i, dt_i)`, the anchor time `tau` and the horizon change `dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeedleSymbol {
    entries: Vec<NeedleEntry>,
    tau: f64,
    dt: f64,
}

impl NeedleSymbol {
    pub fn new(entries: Vec<NeedleEntry>, tau: f64, dt: f64) -> Result<Self> {
        if entries.iter().any(|e| !(e.dt >= 0.0) || !e.tau.is_finite()) || !dt.is_finite() {
            return Err(Error::InvalidSymbol(
                "lengths must be finite and non-negative".into(),
            ));
        }
        if entries.windows(2).any(|w| w[1].tau < w[0].tau) {
            return Err(Error::InvalidSymbol(
                "entry times must be non-decreasing".into(),
            ));
        }
        if entries.last().is_some_and(|e| e.tau > tau) {
            return Err(Error::InvalidSymbol(
                "entry times must not exceed tau".into(),
            ));
        }
        Ok(NeedleSymbol { entries, tau, dt })
    }

    /// A single needle `(tau_1, v, dt_1)` with `tau = tau_1` and no horizon change.
    pub fn single(tau: f64, v: Vec<f64>, dt: f64) -> Result<Self> {
        Self::new(vec![NeedleEntry { tau, v, dt }], tau, 0.0)
    }

    pub fn entries(&self) -> &[NeedleEntry] {
        &self.entries
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Checks the times against the horizon of `u` and regularity of `u` there.
    pub fn validate_for(&self, u: &PiecewiseControl) -> Result<()> {
        let (t0, t1) = (u.t0(), u.t1());
        if !(self.tau > t0 && self.tau < t1) || self.entries.first().is_some_and(|e| e.tau <= t0) {
            return Err(Error::InvalidSymbol(format!(
                "times must lie in ({t0}, {t1})"
            )));
        }
        let tol = 1e-12 * (1.0 + t1.abs().max(t0.abs()));
        for t in self.entries.iter().map(|e| e.tau).chain([self.tau]) {
            if u.is_breakpoint(t, tol) {
                return Err(Error::NotRegular(t));
            }
        }
        let r = u.values()[0].len();
        if let Some(e) = self.entries.iter().find(|e| e.v.len() != r) {
            return Err(Error::DimensionMismatch {
                what: "needle value",
                expected: r,
                found: e.v.len(),
            });
        }
        Ok(())
    }

    /// The offsets `l_i`: interval `I_i = (tau_i + s l_i, tau_i + s (l_i + dt_i)]`.
    fn offsets(&self) -> Vec<f64> {
        let k = self.entries.len();
        let mut l = vec![0.0; k];
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && self.entries[j + 1].tau == self.entries[i].tau {
                j += 1;
            }
            // Entries i..=j share a time; they are stacked to end at the group end.
            let end = if self.entries[i].tau == self.tau {
                self.dt
            } else {
                0.0
            };
            let mut acc = end;
            for q in (i..=j).rev() {
                acc -= self.entries[q].dt;
                l[q] = acc;
            }
            i = j + 1;
        }
        l
    }
}

/// The varied control on `[t0, t1 + s dt]`.
pub fn needle_control(
    u: &PiecewiseControl,
    sym: &NeedleSymbol,
    s: f64,
) -> Result<PiecewiseControl> {
    sym.validate_for(u)?;
    if !(s >= 0.0) {
        return Err(Error::VariationTooLarge(format!("negative parameter {s}")));
    }
    let (t0, t1) = (u.t0(), u.t1());
    let shift = s * sym.dt;
    let cut = sym.tau + shift;
    let intervals: Vec<(f64, f64, &[f64])> = sym
        .entries
        .iter()
        .zip(sym.offsets())
        .filter(|(e, _)| e.dt > 0.0)
        .map(|(e, l)| (e.tau + s * l, e.tau + s * (l + e.dt), e.v.as_slice()))
        .collect();
    if cut <= t0 {
        return Err(Error::VariationTooLarge(format!(
            "horizon change {shift} too large"
        )));
    }
    for (k, &(a, b, _)) in intervals.iter().enumerate() {
        if a < t0 || b > cut {
            return Err(Error::VariationTooLarge(format!(
                "interval ({a}, {b}] leaves [{t0}, {cut}]"
            )));
        }
        if let Some(&(_, pb, _)) = k.checked_sub(1).map(|p| &intervals[p]) {
            if a < pb {
                return Err(Error::VariationTooLarge(format!(
                    "intervals overlap at {a}"
                )));
            }
        }
    }
    let value = |t: f64| -> &[f64] {
        for &(a, b, v) in &intervals {
            if t > a && t <= b {
                return v;
            }
        }
        if t <= cut {
            u.value_at(t)
        } else {
            u.value_at(t - shift)
        }
    };
    let mut pts = vec![t0, cut, t1 + shift];
    for &(a, b, _) in &intervals {
        pts.extend([a, b]);
    }
    for &b in &u.breakpoints()[1..u.breakpoints().len() - 1] {
        if b < cut {
            pts.push(b);
        }
        if b > sym.tau {
            pts.push(b + shift);
        }
    }
    pts.retain(|t| *t >= t0 && *t <= t1 + shift);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    let values = pts
        .windows(2)
        .map(|w| value(0.5 * (w[0] + w[1])).to_vec())
        .collect();
    Ok(PiecewiseControl::new(pts, values)?.simplified())
}

/// Extended state and fundamental matrix of the extended transport sampled
/// at requested times.
struct TransportSamples {
    x: Vec<Vec<f64>>,
    phi: Vec<DMatrix<f64>>,
    end: DMatrix<f64>,
}

/// Integrates the extended state with the fundamental matrix of the extended
/// transport on the grid of `base_path`, stopping additionally at `times`.
fn sample_transport(
    ext: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    times: &[f64],
) -> Result<TransportSamples> {
    let n = ext.alg().n();
    let m = ext.alg().m();
    let h = base_path
        .segments
        .iter()
        .map(|&(s, e)| (base_path.t[e] - base_path.t[s]) / (e - s).max(1) as f64)
        .fold(f64::INFINITY, f64::min);
    let mut bp: Vec<f64> = u.breakpoints().to_vec();
    bp.extend_from_slice(times);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    let values: Vec<Vec<f64>> = bp
        .windows(2)
        .map(|w| u.value_at(0.5 * (w[0] + w[1])).to_vec())
        .collect();
    let counts: Vec<usize> = bp
        .windows(2)
        .map(|w| (((w[1] - w[0]) / h) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let mut y0 = base_path.x_start().to_vec();
    y0.push(0.0);
    y0.extend(DMatrix::<f64>::identity(m, m).iter());
    let traj = integrate_with_counts(&bp, &counts, y0, |k, y| {
        let x = &y[..n];
        let uk = &values[k];
        let mut d = ext.alg().anchor_apply(x, &ext.f(x, uk));
        for c in 0..m {
            d.extend(crate::control::transport_rhs(
                ext,
                x,
                uk,
                &y[n + c * m..n + (c + 1) * m],
            ));
        }
        d
    })?;
    let at = |j: usize| -> (Vec<f64>, DMatrix<f64>) {
        let y = &traj.y[j];
        (y[..n].to_vec(), DMatrix::from_column_slice(m, m, &y[n..]))
    };
    let mut x = Vec::with_capacity(times.len());
    let mut phi = Vec::with_capacity(times.len());
    for &t in times {
        let k = bp.partition_point(|&b| b < t);
        let (xs, ps) = at(traj.segments[k].0);
        x.push(xs);
        phi.push(ps);
    }
    let end = at(traj.y.len() - 1).1;
    Ok(TransportSamples { x, phi, end })
}

impl TransportSamples {
    /// `B_{t1 t_j}[v]`.
    fn carry(&self, j: usize, v: &[f64]) -> Result<Vec<f64>> {
        let w = self.phi[j]
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(v))
            .ok_or(Error::SingularFrame)?;
        Ok((&self.end * w).as_slice().to_vec())
    }
}

/// The endpoint direction `d(0)` of the variation associated with `sym`, in
/// the fiber of `E x TR` over `x(t1)`; the last slot is the cost.
pub fn infinitesimal_variation(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    sym: &NeedleSymbol,
) -> Result<Vec<f64>> {
    sym.validate_for(u)?;
    let ext = extend_system(problem);
    let mut times: Vec<f64> = sym.entries.iter().map(|e| e.tau).collect();
    times.push(sym.tau);
    let samples = sample_transport(&ext, u, base_path, &times)?;
    let m = ext.alg().m();
    let mut out = vec![0.0; m];
    let k = sym.entries.len();
    let f_tau = ext.f(&samples.x[k], u.value_at(sym.tau));
    for (o, v) in out.iter_mut().zip(samples.carry(k, &f_tau)?) {
        *o += v * sym.dt;
    }
    for (j, e) in sym.entries.iter().enumerate() {
        if e.dt == 0.0 {
            continue;
        }
        let x = &samples.x[j];
        let fv = ext.f(x, &e.v);
        let fu = ext.f(x, u.value_at(e.tau));
        let diff: Vec<f64> = fv.iter().zip(&fu).map(|(a, b)| a - b).collect();
        for (o, v) in out.iter_mut().zip(samples.carry(j, &diff)?) {
            *o += v * e.dt;
        }
    }
    Ok(out)
}

/// Where a cone generator comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GeneratorSource {
    Needle {
        tau: f64,
        v: Vec<f64>,
    },
    /// `+-` the transported velocity at the anchor time.
    Time {
        sign: f64,
    },
    /// `+-` a transported basis vector of the initial subspace.
    Subspace {
        index: usize,
        sign: f64,
    },
}

/// A convex cone in the fiber over `x(t1)` described by its generators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationCone {
    pub generators: Vec<Vec<f64>>,
    pub provenance: Vec<GeneratorSource>,
}

impl VariationCone {
    pub fn dim(&self) -> Option<usize> {
        self.generators.first().map(Vec::len)
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}

/// Probe values used when none are given: all of a finite set, the face
/// centres of a box, nothing for an analytic set.
pub fn default_probes(set: &ControlSet) -> Vec<Vec<f64>> {
    match set {
        ControlSet::Finite(p) => p.clone(),
        ControlSet::Box { lo, hi, .. } => {
            let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut out = Vec::with_capacity(2 * lo.len());
            for d in 0..lo.len() {
                for end in [lo[d], hi[d]] {
                    let mut p = mid.clone();
                    p[d] = end;
                    out.push(p);
                }
            }
            out
        }
        ControlSet::Analytic { .. } => Vec::new(),
    }
}

/// Cone generated by single needles at every probe time and value, together
/// with both signs of the horizon change at `tau`.
pub fn build_cone(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    tau: f64,
    probe_controls: &[Vec<f64>],
    probe_times: &[f64],
) -> Result<VariationCone> {
    NeedleSymbol::new(Vec::new(), tau, 1.0)?.validate_for(u)?;
    for &t in probe_times {
        if t > tau {
            return Err(Error::InvalidSymbol(format!(
                "probe time {t} after tau {tau}"
            )));
        }
        NeedleSymbol::single(t, u.values()[0].clone(), 1.0)?.validate_for(u)?;
    }
    let ext = extend_system(problem);
    let mut times = probe_times.to_vec();
    times.push(tau);
    let samples = sample_transport(&ext, u, base_path, &times)?;
    let mut cone = VariationCone {
        generators: Vec::new(),
        provenance: Vec::new(),
    };
    for (j, &t) in probe_times.iter().enumerate() {
        let x = &samples.x[j];
        let fu = ext.f(x, u.value_at(t));
        for v in probe_controls {
            let fv = ext.f(x, v);
            let diff: Vec<f64> = fv.iter().zip(&fu).map(|(a, b)| a - b).collect();
            cone.generators.push(samples.carry(j, &diff)?);
            cone.provenance.push(GeneratorSource::Needle {
                tau: t,
                v: v.clone(),
            });
        }
    }
    let k = probe_times.len();
    let g = samples.carry(k, &ext.f(&samples.x[k], u.value_at(tau)))?;
    for sign in [1.0, -1.0] {
        cone.generators.push(g.iter().map(|c| sign * c).collect());
        cone.provenance.push(GeneratorSource::Time { sign });
    }
    Ok(cone)
}

/// Adds both signs of each vector, turning the span into part of the cone.
pub fn augment_cone(cone: &VariationCone, basis: &[Vec<f64>]) -> Result<VariationCone> {
    let mut out = cone.clone();
    for (index, v) in basis.iter().enumerate() {
        if let Some(d) = cone.dim() {
            check_dim("subspace vector", d, v.len())?;
        }
        for sign in [1.0, -1.0] {
            out.generators.push(v.iter().map(|c| sign * c).collect());
            out.provenance
                .push(GeneratorSource::Subspace { index, sign });
        }
    }
    Ok(out)
}

/// Transports a basis of the initial subspace (in the extended fiber over
/// `x(t0)`) to the endpoint.
pub fn transport_subspace(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    basis: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let ext = extend_system(problem);
    let samples = sample_transport(&ext, u, base_path, &[])?;
    basis
        .iter()
        .map(|v| {
            check_dim("subspace vector", ext.alg().m(), v.len())?;
            Ok((&samples.end * DVector::from_column_slice(v))
                .as_slice()
                .to_vec())
        })
        .collect()
}

/// Outcome of separating a cone from a ray.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Separation {
    pub separable: bool,
    /// Covector with `max |phi_i| = 1`, present when separable.
    pub phi: Option<Vec<f64>>,
    /// `-<g, phi>` for each generator scaled to unit sup-norm (zero generators give 0).
    pub margins: Vec<f64>,
    /// `<ray, phi>`.
    pub ray_margin: f64,
    /// Optimal value of the normalized program; separation holds when it is `<= 0`.
    pub objective: f64,
    /// Generator most violated by the best covector found when not separable.
    pub violated: Option<usize>,
    /// Every generator vanishes, so any admissible covector separates.
    pub degenerate: bool,
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let s = v.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    (s > 0.0).then(|| v.iter().map(|c| c / s).collect())
}

/// Looks for `phi` with `max |phi_i| = 1`, `<g, phi> <= 0` for all generators,
/// `<ray, phi> >= 0` and `phi` vanishing on `extra_subspace`.
pub fn separate_cone_ray(
    cone: &VariationCone,
    ray: &[f64],
    extra_subspace: &[Vec<f64>],
) -> Result<Separation> {
    let d = ray.len();
    for g in &cone.generators {
        check_dim("generator", d, g.len())?;
    }
    for v in extra_subspace {
        check_dim("subspace vector", d, v.len())?;
    }
    let gens: Vec<Option<Vec<f64>>> = cone.generators.iter().map(|g| unit(g)).collect();
    let degenerate = gens.iter().all(Option::is_none);
    let ray_u = unit(ray).ok_or(Error::InvalidSymbol("ray direction is zero".into()))?;
    let subs: Vec<Vec<f64>> = extra_subspace.iter().filter_map(|v| unit(v)).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..d {
        for sigma in [1.0, -1.0] {
            let mut lp = Problem::new(OptimizationDirection::Minimize);
            let phi: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
            let t = lp.add_var(1.0, (-1.0, f64::INFINITY));
            for g in gens.iter().flatten() {
                let mut e: Vec<_> = phi.iter().zip(g).map(|(&p, &c)| (p, c)).collect();
                e.push((t, -1.0));
                lp.add_constraint(e.as_slice(), ComparisonOp::Le, 0.0);
            }
            let mut e: Vec<_> = phi.iter().zip(&ray_u).map(|(&p, &c)| (p, -c)).collect();
            e.push((t, -1.0));
            lp.add_constraint(e.as_slice(), ComparisonOp::Le, 0.0);
            for v in &subs {
                let e: Vec<_> = phi.iter().zip(v).map(|(&p, &c)| (p, c)).collect();
                lp.add_constraint(e.as_slice(), ComparisonOp::Eq, 0.0);
            }
            lp.add_constraint([(phi[k], 1.0)], ComparisonOp::Eq, sigma);
            match lp.solve() {
                Ok(sol) => {
                    let val = sol[t];
                    if best.as_ref().is_none_or(|(b, _)| val < *b - 1e-15) {
                        best = Some((val, phi.iter().map(|&p| sol[p]).collect()));
                    }
                }
                Err(minilp::Error::Infeasible) => {}
                Err(e) => return Err(Error::Lp(e.to_string())),
            }
        }
    }
    let Some((objective, phi)) = best else {
        // Only the subspace constraints can make every program infeasible.
        return Ok(Separation {
            separable: false,
            phi: None,
            margins: vec![0.0; gens.len()],
            ray_margin: 0.0,
            objective: f64::INFINITY,
            violated: None,
            degenerate,
        });
    };
    let dot = |a: &[f64]| -> f64 { a.iter().zip(&phi).map(|(x, y)| x * y).sum() };
    let margins: Vec<f64> = gens
        .iter()
        .map(|g| g.as_ref().map_or(0.0, |g| -dot(g)))
        .collect();
    let ray_margin = dot(ray);
    let separable = objective <= TOL_SEPARATION;
    let violated = if separable {
        None
    } else {
        margins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
    };
    Ok(Separation {
        separable,
        phi: separable.then_some(phi),
        margins,
        ray_margin,
        objective,
        violated,
        degenerate,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateOptions {
    /// Probe values; `None` uses [`default_probes`].
    pub probe_controls: Option<Vec<Vec<f64>>>,
    /// Offset of the extra probes placed on both sides of each switch.
    pub switch_offset: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            probe_controls: None,
            switch_offset: 1e-8,
        }
    }
}

/// Separation of the needle cone from the ray `(0, ..., 0, -1)` and, when it
/// succeeds, the covector carried back along the trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct PmpCertificate {
    pub tau: f64,
    pub cone: VariationCone,
    pub separation: Separation,
    /// Separating covector rescaled so that its cost slot is `-1` when that slot is nonzero.
    pub phi: Option<Vec<f64>>,
    pub costate: Option<CostateTrajectory>,
    pub report: Option<PmpReport>,
}

impl PmpCertificate {
    /// The generator that defeats separation, with its origin.
    pub fn violated_generator(&self) -> Option<(&[f64], &GeneratorSource)> {
        self.separation
            .violated
            .map(|j| (self.cone.generators[j].as_slice(), &self.cone.provenance[j]))
    }
}

/// Probe times for a certificate: interior grid nodes of `base_path` not at a
/// switch, plus points `offset` before and after each switch, up to `tau`.
pub fn certificate_probe_times(
    u: &PiecewiseControl,
    base_path: &SampledPath,
    tau: f64,
    offset: f64,
) -> Vec<f64> {
    let scale = offset * (u.t1() - u.t0());
    let tol = 1e-12 * (1.0 + u.t1().abs());
    let mut times: Vec<f64> = base_path
        .t
        .iter()
        .copied()
        .filter(|&t| t > u.t0() && t <= tau && !u.is_breakpoint(t, tol))
        .collect();
    for &b in &u.breakpoints()[1..u.breakpoints().len() - 1] {
        for t in [b - scale, b + scale] {
            if t > u.t0() && t <= tau {
                times.push(t);
            }
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= tol);
    times
}

/// The last regular grid node strictly before the end of the horizon.
pub fn default_anchor_time(u: &PiecewiseControl, base_path: &SampledPath) -> Result<f64> {
    let tol = 1e-12 * (1.0 + u.t1().abs());
    base_path
        .t
        .iter()
        .rev()
        .copied()
        .find(|&t| t < u.t1() - tol && t > u.t0() && !u.is_breakpoint(t, tol))
        .ok_or(Error::NotRegular(u.t1()))
}

/// Builds the cone at `tau`, separates it from the cost ray and carries a
/// separating covector back along the trajectory to evaluate the maximum principle.
pub fn pmp_certificate(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    tau: f64,
    opts: &CertificateOptions,
) -> Result<PmpCertificate> {
    let probes = opts
        .probe_controls
        .clone()
        .unwrap_or_else(|| default_probes(problem.controls()));
    let times = certificate_probe_times(u, base_path, tau, opts.switch_offset);
    let cone = build_cone(problem, u, base_path, tau, &probes, &times)?;
    let m = problem.alg().m();
    let mut ray = vec![0.0; m + 1];
    ray[m] = -1.0;
    let separation = separate_cone_ray(&cone, &ray, &[])?;
    let Some(raw) = separation.phi.clone() else {
        return Ok(PmpCertificate {
            tau,
            cone,
            separation,
            phi: None,
            costate: None,
            report: None,
        });
    };
    let phi: Vec<f64> = if raw[m].abs() > TOL_SEPARATION {
        raw.iter().map(|c| c / raw[m].abs()).collect()
    } else {
        raw
    };
    let costate = carry_back(problem, u, base_path, &phi)?;
    let report = pmp_residual_report(problem, &costate)?;
    Ok(PmpCertificate {
        tau,
        cone,
        separation,
        phi: Some(phi),
        costate: Some(costate),
        report: Some(report),
    })
}

/// Back-transports an extended covector `(xi, xi0)` given at `t1` and returns
/// the costate of the original system with multiplier `xi0`.
fn carry_back(
    problem: &ControlProblem,
    u: &PiecewiseControl,
    base_path: &SampledPath,
    phi: &[f64],
) -> Result<CostateTrajectory> {
    let m = problem.alg().m();
    let ext = extend_system(problem);
    let cost = base_path
        .cost
        .clone()
        .unwrap_or_else(|| vec![0.0; base_path.len()]);
    let ext_path = SampledPath {
        t: base_path.t.clone(),
        x: base_path
            .x
            .iter()
            .zip(&cost)
            .map(|(x, c)| {
                let mut v = x.clone();
                v.push(*c);
                v
            })
            .collect(),
        a: None,
        cost: None,
        segments: base_path.segments.clone(),
    };
    let tr = costate_transport_backward(&ext, u, &ext_path, phi, 0.0)?;
    let n = problem.alg().n();
    crate::control::rebuild_costate(
        problem,
        tr.t,
        tr.x.iter().map(|x| x[..n].to_vec()).collect(),
        tr.xi.iter().map(|v| v[..m].to_vec()).collect(),
        phi[m],
        tr.u,
        tr.segments,
    )
}

/// Largest entry of the difference of two vectors after scaling each to unit sup-norm.
pub fn direction_mismatch(a: &[f64], b: &[f64]) -> f64 {
    match (unit(a), unit(b)) {
        (Some(a), Some(b)) => a.iter().zip(&b).fold(0.0, |w, (x, y)| w.max((x - y).abs())),
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests;
