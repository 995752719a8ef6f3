//! Algebroids in local coordinates.
//!
//! An algebroid over an open set of `R^n` with fiber `R^m` is described by its
//! anchor `rho^a_i(x)` (an `n x m` matrix) and bracket coefficients
//! `c^i_{jk}(x)`, with the convention `[e_j, e_k] = c^i_{jk} e_i`.

mod axioms;
mod constructors;
mod geometry;
mod sampling;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use axioms::{check_almost_lie, check_jacobi, check_skew, jacobiator, AxiomReport};
pub use constructors::{
    atiyah_trivialized, frame_orthogonality_defect, lie_algebra, nonholonomic_restriction,
    product_algebroid, se2, so3, tangent, AtiyahData, CONSTRUCTOR_NAMES,
};
pub use geometry::{
    complete_lift, hamiltonian_vector_field, linear_poisson_bivector, tangent_pairing,
    AnalyticHamiltonian, Hamiltonian, LinearHamiltonian, Section, TangentVector,
};
pub use sampling::halton;

use crate::error::{check_dim, Result};

/// Default central-difference step for structure-function derivatives.
pub const FD_STEP: f64 = 1e-6;

/// Bracket coefficients `c^i_{jk}` at one point, stored with `i` outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Bracket {
    m: usize,
    data: Vec<f64>,
}

impl Bracket {
    pub fn zeros(m: usize) -> Self {
        Bracket {
            m,
            data: vec![0.0; m * m * m],
        }
    }

    /// Builds coefficients from `(i, j, k, value)` entries, filling `c^i_{kj} = -value` too.
    pub fn from_skew_entries(m: usize, entries: &[(usize, usize, usize, f64)]) -> Self {
        let mut c = Bracket::zeros(m);
        for &(i, j, k, v) in entries {
            c.set(i, j, k, v);
            c.set(i, k, j, -v);
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.m + j) * self.m + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.m + j) * self.m + k] = v;
    }

    /// `[y, z]^i = c^i_{jk} y^j z^k`.
    pub fn apply(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..m {
                if y[j] == 0.0 {
                    continue;
                }
                for k in 0..m {
                    s += self.get(i, j, k) * y[j] * z[k];
                }
            }
            *o = s;
        }
        out
    }

    /// `w_k = c^i_{jk} y^j xi_i`, the coadjoint-type contraction used by costates.
    pub fn coapply(&self, y: &[f64], xi: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += self.get(i, j, k) * y[j] * xi[i];
                }
            }
            *o = s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

pub type AnchorFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type BracketFn = Arc<dyn Fn(&[f64]) -> Bracket + Send + Sync>;
/// Returns `[d rho / d x^b for b in 0..n]`.
pub type AnchorJetFn = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;
/// Returns `[d c / d x^b for b in 0..n]`.
pub type BracketJetFn = Arc<dyn Fn(&[f64]) -> Vec<Bracket> + Send + Sync>;

/// Axis-aligned box used to draw sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        DomainBox {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

/// Local structure data of a skew-algebroid.
#[derive(Clone)]
pub struct LocalAlgebroid {
    name: String,
    n: usize,
    m: usize,
    anchor: AnchorFn,
    bracket: BracketFn,
    anchor_jet: Option<AnchorJetFn>,
    bracket_jet: Option<BracketJetFn>,
    domain: DomainBox,
    fd_step: f64,
}

impl fmt::Debug for LocalAlgebroid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalAlgebroid")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("analytic_jets", &self.has_analytic_jets())
            .finish()
    }
}

impl LocalAlgebroid {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        anchor: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        bracket: impl Fn(&[f64]) -> Bracket + Send + Sync + 'static,
    ) -> Self {
        LocalAlgebroid {
            name: name.into(),
            n,
            m,
            anchor: Arc::new(anchor),
            bracket: Arc::new(bracket),
            anchor_jet: None,
            bracket_jet: None,
            domain: DomainBox::cube(n, 1.0),
            fd_step: FD_STEP,
        }
    }

    pub fn with_anchor_jet(
        mut self,
        jet: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.anchor_jet = Some(Arc::new(jet));
        self
    }

    pub fn with_bracket_jet(
        mut self,
        jet: impl Fn(&[f64]) -> Vec<Bracket> + Send + Sync + 'static,
    ) -> Self {
        self.bracket_jet = Some(Arc::new(jet));
        self
    }

    /// Drops analytic derivatives so that finite differences are used instead.
    pub fn without_jets(mut self) -> Self {
        self.anchor_jet = None;
        self.bracket_jet = None;
        self
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.lo.len(), self.n, "domain dimension");
        self.domain = domain;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Base dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Fiber dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_jets(&self) -> bool {
        self.anchor_jet.is_some() && self.bracket_jet.is_some()
    }

    /// Default tolerance for the sample-based axiom checks.
    pub fn axiom_tolerance(&self) -> f64 {
        if self.has_analytic_jets() {
            1e-8
        } else {
            1e-5
        }
    }

    pub(crate) fn anchor_fn(&self) -> &AnchorFn {
        &self.anchor
    }

    pub(crate) fn bracket_fn(&self) -> &BracketFn {
        &self.bracket
    }

    pub(crate) fn anchor_jet_fn(&self) -> Option<&AnchorJetFn> {
        self.anchor_jet.as_ref()
    }

    pub(crate) fn bracket_jet_fn(&self) -> Option<&BracketJetFn> {
        self.bracket_jet.as_ref()
    }

    pub fn anchor(&self, x: &[f64]) -> DMatrix<f64> {
        (self.anchor)(x)
    }

    pub fn bracket(&self, x: &[f64]) -> Bracket {
        (self.bracket)(x)
    }

    /// `rho(x) y`.
    pub fn anchor_apply(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let r = self.anchor(x);
        (0..self.n)
            .map(|a| (0..self.m).map(|i| r[(a, i)] * y[i]).sum())
            .collect()
    }

    /// Partial derivatives of the anchor, analytic when supplied.
    pub fn anchor_jet(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        if let Some(j) = &self.anchor_jet {
            return j(x);
        }
        self.anchor_jet_fd(x)
    }

    /// Partial derivatives of the bracket coefficients, analytic when supplied.
    pub fn bracket_jet(&self, x: &[f64]) -> Vec<Bracket> {
        if let Some(j) = &self.bracket_jet {
            return j(x);
        }
        self.bracket_jet_fd(x)
    }

    pub fn anchor_jet_fd(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let h = self.fd_step;
        let mut xp = x.to_vec();
        (0..self.n)
            .map(|b| {
                xp[b] = x[b] + h;
                let up = self.anchor(&xp);
                xp[b] = x[b] - h;
                let dn = self.anchor(&xp);
                xp[b] = x[b];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    pub fn bracket_jet_fd(&self, x: &[f64]) -> Vec<Bracket> {
        let h = self.fd_step;
        let mut xp = x.to_vec();
        (0..self.n)
            .map(|b| {
                xp[b] = x[b] + h;
                let up = self.bracket(&xp);
                xp[b] = x[b] - h;
                let dn = self.bracket(&xp);
                xp[b] = x[b];
                Bracket {
                    m: self.m,
                    data: up
                        .data
                        .iter()
                        .zip(&dn.data)
                        .map(|(p, q)| (p - q) / (2.0 * h))
                        .collect(),
                }
            })
            .collect()
    }

    /// Largest discrepancy between analytic and finite-difference jets at `x`.
    /// Returns `None` when no analytic jet is available to compare.
    pub fn jet_consistency(&self, x: &[f64]) -> Option<f64> {
        if self.anchor_jet.is_none() && self.bracket_jet.is_none() {
            return None;
        }
        let mut worst: f64 = 0.0;
        if let Some(j) = &self.anchor_jet {
            for (a, f) in j(x).iter().zip(self.anchor_jet_fd(x)) {
                worst = worst.max((a - f).amax());
            }
        }
        if let Some(j) = &self.bracket_jet {
            for (a, f) in j(x).iter().zip(self.bracket_jet_fd(x)) {
                for (p, q) in a.data.iter().zip(&f.data) {
                    worst = worst.max((p - q).abs());
                }
            }
        }
        Some(worst)
    }

    /// Deterministic quasi-random points in the domain box.
    pub fn sample_points(&self, count: usize) -> Vec<Vec<f64>> {
        if self.n == 0 {
            return vec![Vec::new(); count.max(1)];
        }
        (1..=count)
            .map(|k| {
                let u = halton(k, self.n);
                (0..self.n)
                    .map(|b| self.domain.lo[b] + u[b] * (self.domain.hi[b] - self.domain.lo[b]))
                    .collect()
            })
            .collect()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim("base point", self.n, x.len())
    }

    pub(crate) fn check_fiber(&self, y: &[f64]) -> Result<()> {
        check_dim("fiber vector", self.m, y.len())
    }
}

/// A point of `E`: base coordinates and fiber coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidElement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A point of the dual bundle `E*`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebroidCovector {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}
