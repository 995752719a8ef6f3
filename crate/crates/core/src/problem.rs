//! Control systems with running cost over an algebroid.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::algebroid::{LocalAlgebroid, FD_STEP};
use crate::error::{check_dim, Error, Result};

pub type ControlMap = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type ControlJacobian = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type CostGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, xi, xi0) -> u*`, a closed-form maximizer of the Hamiltonian.
pub type ArgmaxHook = Arc<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;

/// The set of admissible control values.
#[derive(Clone)]
pub enum ControlSet {
    /// Finitely many points; ties in maximization go to the earliest entry.
    Finite(Vec<Vec<f64>>),
    /// A box searched on a uniform grid with `resolution` points per axis.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        resolution: usize,
    },
    /// Unconstrained (or otherwise structured) set with a closed-form maximizer.
    Analytic { dim: usize, argmax: ArgmaxHook },
}

impl fmt::Debug for ControlSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSet::Finite(p) => f.debug_tuple("Finite").field(p).finish(),
            ControlSet::Box { lo, hi, resolution } => f
                .debug_struct("Box")
                .field("lo", lo)
                .field("hi", hi)
                .field("resolution", resolution)
                .finish(),
            ControlSet::Analytic { dim, .. } => {
                f.debug_struct("Analytic").field("dim", dim).finish()
            }
        }
    }
}

impl ControlSet {
    pub fn analytic(
        dim: usize,
        argmax: impl Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ControlSet::Analytic {
            dim,
            argmax: Arc::new(argmax),
        }
    }

    /// Dimension `r` of the control space.
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Finite(p) => p.first().map_or(0, Vec::len),
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Analytic { dim, .. } => *dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            ControlSet::Finite(p) => p.is_empty(),
            ControlSet::Box { lo, hi, resolution } => {
                *resolution == 0 || lo.iter().zip(hi).any(|(l, h)| l > h)
            }
            ControlSet::Analytic { .. } => false,
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::Finite(p) => p
                .iter()
                .any(|v| v.len() == u.len() && v.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
            ControlSet::Box { lo, hi, .. } => {
                u.len() == lo.len()
                    && u.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
            ControlSet::Analytic { dim, .. } => u.len() == *dim,
        }
    }

    /// Candidate points searched by grid maximization (finite or box sets).
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Finite(p) => p.clone(),
            ControlSet::Box { lo, hi, resolution } => {
                let r = lo.len();
                let k = *resolution;
                let total = k.pow(r as u32);
                (0..total)
                    .map(|mut idx| {
                        (0..r)
                            .map(|d| {
                                let i = idx % k;
                                idx /= k;
                                if k == 1 {
                                    0.5 * (lo[d] + hi[d])
                                } else {
                                    lo[d] + (hi[d] - lo[d]) * i as f64 / (k - 1) as f64
                                }
                            })
                            .collect()
                    })
                    .collect()
            }
            ControlSet::Analytic { .. } => Vec::new(),
        }
    }
}

/// A control system `f(x, u)` with running cost `L(x, u)` over an algebroid.
#[derive(Clone)]
pub struct ControlProblem {
    alg: LocalAlgebroid,
    f: ControlMap,
    f_x: Option<ControlJacobian>,
    cost: CostFn,
    cost_x: Option<CostGradient>,
    controls: ControlSet,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("alg", &self.alg)
            .field("controls", &self.controls)
            .finish()
    }
}

impl ControlProblem {
    pub fn new(
        alg: LocalAlgebroid,
        f: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        cost: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        controls: ControlSet,
    ) -> Self {
        ControlProblem {
            alg,
            f: Arc::new(f),
            f_x: None,
            cost: Arc::new(cost),
            cost_x: None,
            controls,
        }
    }

    pub(crate) fn from_parts(
        alg: LocalAlgebroid,
        f: ControlMap,
        f_x: Option<ControlJacobian>,
        cost: CostFn,
        cost_x: Option<CostGradient>,
        controls: ControlSet,
    ) -> Self {
        ControlProblem {
            alg,
            f,
            f_x,
            cost,
            cost_x,
            controls,
        }
    }

    /// Supplies `df^i/dx^a` as an `m x n` matrix.
    pub fn with_f_jacobian(
        mut self,
        jac: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.f_x = Some(Arc::new(jac));
        self
    }

    pub fn with_cost_gradient(
        mut self,
        grad: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.cost_x = Some(Arc::new(grad));
        self
    }

    pub fn with_controls(mut self, controls: ControlSet) -> Self {
        self.controls = controls;
        self
    }

    pub fn alg(&self) -> &LocalAlgebroid {
        &self.alg
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub(crate) fn parts(
        &self,
    ) -> (
        &ControlMap,
        Option<&ControlJacobian>,
        &CostFn,
        Option<&CostGradient>,
    ) {
        (&self.f, self.f_x.as_ref(), &self.cost, self.cost_x.as_ref())
    }

    pub fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.f)(x, u)
    }

    pub fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.cost)(x, u)
    }

    /// `df^i/dx^a`, analytic when supplied.
    pub fn f_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        match &self.f_x {
            Some(j) => j(x, u),
            None => self.f_jacobian_fd(x, u),
        }
    }

    pub fn f_jacobian_fd(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.alg.n(), self.alg.m());
        let h = FD_STEP;
        let mut jac = DMatrix::zeros(m, n);
        let mut xp = x.to_vec();
        for a in 0..n {
            xp[a] = x[a] + h;
            let up = self.f(&xp, u);
            xp[a] = x[a] - h;
            let dn = self.f(&xp, u);
            xp[a] = x[a];
            for i in 0..m {
                jac[(i, a)] = (up[i] - dn[i]) / (2.0 * h);
            }
        }
        jac
    }

    /// `dL/dx^a`, analytic when supplied.
    pub fn cost_gradient(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match &self.cost_x {
            Some(g) => g(x, u),
            None => self.cost_gradient_fd(x, u),
        }
    }

    pub fn cost_gradient_fd(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let h = FD_STEP;
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|a| {
                xp[a] = x[a] + h;
                let up = self.cost(&xp, u);
                xp[a] = x[a] - h;
                let dn = self.cost(&xp, u);
                xp[a] = x[a];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    /// Largest gap between analytic and finite-difference derivatives of `f` and `L`.
    pub fn derivative_consistency(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        if self.f_x.is_some() {
            worst = worst.max((self.f_jacobian(x, u) - self.f_jacobian_fd(x, u)).amax());
        }
        if self.cost_x.is_some() {
            for (a, b) in self
                .cost_gradient(x, u)
                .iter()
                .zip(self.cost_gradient_fd(x, u))
            {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Checks the dimensions of `f(x, u)` at one point.
    pub fn validate(&self, x: &[f64], u: &[f64]) -> Result<()> {
        self.alg.check_point(x)?;
        check_dim("control", self.controls.dim(), u.len())?;
        check_dim("control map value", self.alg.m(), self.f(x, u).len())?;
        if self.controls.is_empty() {
            return Err(Error::EmptyControlSet);
        }
        Ok(())
    }
}
