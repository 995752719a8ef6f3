use serde::Serialize;

use super::LocalAlgebroid;
use crate::error::{Error, Result};

/// Outcome of a sample-based structure check.
#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub max_violation: f64,
    pub pass: bool,
    pub tolerance: f64,
    pub samples: usize,
    /// Sample at which the largest violation occurred.
    pub worst_point: Vec<f64>,
}

impl AxiomReport {
    fn new(tolerance: f64, samples: usize) -> Self {
        AxiomReport {
            max_violation: 0.0,
            pass: true,
            tolerance,
            samples,
            worst_point: Vec::new(),
        }
    }

    fn record(&mut self, v: f64, x: &[f64]) {
        if v > self.max_violation || self.worst_point.is_empty() {
            if v >= self.max_violation {
                self.max_violation = v;
            }
            self.worst_point = x.to_vec();
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.max_violation <= self.tolerance;
        self
    }

    /// Re-evaluates the verdict against a different tolerance.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self.finish()
    }
}

fn prepare(alg: &LocalAlgebroid, samples: &[Vec<f64>]) -> Result<AxiomReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    for x in samples {
        alg.check_point(x)?;
    }
    Ok(AxiomReport::new(alg.axiom_tolerance(), samples.len()))
}

/// Largest `|c^i_{jk} + c^i_{kj}|` over the samples.
pub fn check_skew(alg: &LocalAlgebroid, samples: &[Vec<f64>]) -> Result<AxiomReport> {
    let mut rep = prepare(alg, samples)?;
    let m = alg.m();
    for x in samples {
        let c = alg.bracket(x);
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in j..m {
                    worst = worst.max((c.get(i, j, k) + c.get(i, k, j)).abs());
                }
            }
        }
        rep.record(worst, x);
    }
    Ok(rep.finish())
}

/// Largest residual of the anchor/bracket compatibility identity
/// `(d_b rho^a_k) rho^b_j - (d_b rho^a_j) rho^b_k - rho^a_i c^i_{jk}`.
pub fn check_almost_lie(alg: &LocalAlgebroid, samples: &[Vec<f64>]) -> Result<AxiomReport> {
    let mut rep = prepare(alg, samples)?;
    let (n, m) = (alg.n(), alg.m());
    for x in samples {
        let rho = alg.anchor(x);
        let drho = alg.anchor_jet(x);
        let c = alg.bracket(x);
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for j in 0..m {
                for k in 0..m {
                    let mut r = 0.0;
                    for (b, d) in drho.iter().enumerate() {
                        r += d[(a, k)] * rho[(b, j)] - d[(a, j)] * rho[(b, k)];
                    }
                    for i in 0..m {
                        r -= rho[(a, i)] * c.get(i, j, k);
                    }
                    worst = worst.max(r.abs());
                }
            }
        }
        rep.record(worst, x);
    }
    Ok(rep.finish())
}

/// Jacobiator of the bracket on the local frame:
/// `J^i_{jkl} = sum over cyclic (j,k,l) of c^m_{jk} c^i_{ml} - rho^b_l d_b c^i_{jk}`,
/// i.e. the coefficients of `[[e_j,e_k],e_l] + [[e_k,e_l],e_j] + [[e_l,e_j],e_k]`.
pub fn jacobiator(alg: &LocalAlgebroid, x: &[f64]) -> Vec<f64> {
    let m = alg.m();
    let c = alg.bracket(x);
    let rho = alg.anchor(x);
    let dc = alg.bracket_jet(x);
    // rho(e_l)(c^i_{jk})
    let lie_d = |i: usize, j: usize, k: usize, l: usize| -> f64 {
        dc.iter()
            .enumerate()
            .map(|(b, d)| rho[(b, l)] * d.get(i, j, k))
            .sum()
    };
    let term = |i: usize, j: usize, k: usize, l: usize| -> f64 {
        let mut s = 0.0;
        for p in 0..m {
            s += c.get(p, j, k) * c.get(i, p, l);
        }
        s - lie_d(i, j, k, l)
    };
    let mut out = vec![0.0; m * m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    out[((i * m + j) * m + k) * m + l] =
                        term(i, j, k, l) + term(i, k, l, j) + term(i, l, j, k);
                }
            }
        }
    }
    out
}

/// Largest Jacobiator entry over the samples.
pub fn check_jacobi(alg: &LocalAlgebroid, samples: &[Vec<f64>]) -> Result<AxiomReport> {
    let mut rep = prepare(alg, samples)?;
    for x in samples {
        let worst = jacobiator(alg, x)
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        rep.record(worst, x);
    }
    Ok(rep.finish())
}
