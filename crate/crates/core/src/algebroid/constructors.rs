use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Bracket, DomainBox, LocalAlgebroid, TangentVector};
use crate::error::{Error, Result};

/// Names under which the built-in constructors are registered.
pub const CONSTRUCTOR_NAMES: [&str; 5] = [
    "tangent",
    "lie_algebra",
    "product",
    "atiyah",
    "nonholonomic",
];

/// The tangent algebroid `TR^n`.
pub fn tangent(n: usize) -> LocalAlgebroid {
    LocalAlgebroid::new(
        format!("tangent({n})"),
        n,
        n,
        move |_| DMatrix::identity(n, n),
        move |_| Bracket::zeros(n),
    )
    .with_anchor_jet(move |_| vec![DMatrix::zeros(n, n); n])
    .with_bracket_jet(move |_| vec![Bracket::zeros(n); n])
}

/// A Lie algebra viewed as an algebroid over a point.
pub fn lie_algebra(name: impl Into<String>, constants: Bracket) -> LocalAlgebroid {
    let m = constants.dim();
    LocalAlgebroid::new(
        name,
        0,
        m,
        move |_| DMatrix::zeros(0, m),
        move |_| constants.clone(),
    )
    .with_anchor_jet(|_| Vec::new())
    .with_bracket_jet(|_| Vec::new())
}

/// `so(3)` with `[e_i, e_j] = eps_{ijk} e_k`.
pub fn so3() -> LocalAlgebroid {
    lie_algebra(
        "so3",
        Bracket::from_skew_entries(3, &[(2, 0, 1, 1.0), (0, 1, 2, 1.0), (1, 2, 0, 1.0)]),
    )
}

/// `se(2)` with `[E3,E1] = E2`, `[E2,E3] = E1`, `[E1,E2] = 0`.
pub fn se2() -> LocalAlgebroid {
    lie_algebra(
        "se2",
        Bracket::from_skew_entries(3, &[(1, 2, 0, 1.0), (0, 1, 2, 1.0)]),
    )
}

/// Product algebroid: block-diagonal anchor, bracket vanishing on mixed indices.
pub fn product_algebroid(a1: &LocalAlgebroid, a2: &LocalAlgebroid) -> LocalAlgebroid {
    let (n1, m1, n2, m2) = (a1.n(), a1.m(), a2.n(), a2.m());
    let (n, m) = (n1 + n2, m1 + m2);
    let (r1, r2) = (a1.anchor_fn().clone(), a2.anchor_fn().clone());
    let (c1, c2) = (a1.bracket_fn().clone(), a2.bracket_fn().clone());
    let anchor = move |x: &[f64]| {
        let mut r = DMatrix::zeros(n, m);
        r.view_mut((0, 0), (n1, m1)).copy_from(&r1(&x[..n1]));
        r.view_mut((n1, m1), (n2, m2)).copy_from(&r2(&x[n1..]));
        r
    };
    let bracket = move |x: &[f64]| embed_brackets(&c1(&x[..n1]), &c2(&x[n1..]), m1, m2);
    let mut alg = LocalAlgebroid::new(
        format!("{}x{}", a1.name(), a2.name()),
        n,
        m,
        anchor,
        bracket,
    );
    if let (Some(j1), Some(j2)) = (a1.anchor_jet_fn().cloned(), a2.anchor_jet_fn().cloned()) {
        alg = alg.with_anchor_jet(move |x: &[f64]| {
            let mut out = Vec::with_capacity(n);
            for d in j1(&x[..n1]) {
                let mut r = DMatrix::zeros(n, m);
                r.view_mut((0, 0), (n1, m1)).copy_from(&d);
                out.push(r);
            }
            for d in j2(&x[n1..]) {
                let mut r = DMatrix::zeros(n, m);
                r.view_mut((n1, m1), (n2, m2)).copy_from(&d);
                out.push(r);
            }
            out
        });
    }
    if let (Some(j1), Some(j2)) = (a1.bracket_jet_fn().cloned(), a2.bracket_jet_fn().cloned()) {
        alg = alg.with_bracket_jet(move |x: &[f64]| {
            let z1 = Bracket::zeros(m1);
            let z2 = Bracket::zeros(m2);
            let mut out: Vec<Bracket> = j1(&x[..n1])
                .iter()
                .map(|d| embed_brackets(d, &z2, m1, m2))
                .collect();
            out.extend(j2(&x[n1..]).iter().map(|d| embed_brackets(&z1, d, m1, m2)));
            out
        });
    }
    let mut lo = a1.domain().lo.clone();
    lo.extend_from_slice(&a2.domain().lo);
    let mut hi = a1.domain().hi.clone();
    hi.extend_from_slice(&a2.domain().hi);
    alg.with_domain(DomainBox { lo, hi })
        .with_fd_step(a1.fd_step().max(a2.fd_step()))
}

fn embed_brackets(c1: &Bracket, c2: &Bracket, m1: usize, m2: usize) -> Bracket {
    let mut c = Bracket::zeros(m1 + m2);
    for i in 0..m1 {
        for j in 0..m1 {
            for k in 0..m1 {
                c.set(i, j, k, c1.get(i, j, k));
            }
        }
    }
    for i in 0..m2 {
        for j in 0..m2 {
            for k in 0..m2 {
                c.set(m1 + i, m1 + j, m1 + k, c2.get(i, j, k));
            }
        }
    }
    c
}

type CurvatureFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type CurvatureJetFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A connection trivialization `TM x g` of an Atiyah algebroid.
///
/// Fiber coordinates are ordered `(X^1..X^n, a^1..a^k)`. Curvature values are
/// laid out as `F^alpha_{ab}` at index `(alpha * n + a) * n + b`.
#[derive(Clone)]
pub struct AtiyahData {
    base_dim: usize,
    algebra: Bracket,
    curvature: CurvatureFn,
    curvature_jet: Option<CurvatureJetFn>,
}

impl AtiyahData {
    pub fn new(
        base_dim: usize,
        algebra: Bracket,
        curvature: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let k = algebra.dim();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    worst = worst.max((algebra.get(i, j, l) + algebra.get(i, l, j)).abs());
                }
            }
        }
        if worst > 1e-12 {
            return Err(Error::NotSkew(worst));
        }
        Ok(AtiyahData {
            base_dim,
            algebra,
            curvature: Arc::new(curvature),
            curvature_jet: None,
        })
    }

    /// Supplies `[dF/dx^d for d in 0..n]` in the curvature layout.
    pub fn with_curvature_jet(
        mut self,
        jet: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.curvature_jet = Some(Arc::new(jet));
        self
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn algebra_dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn curvature(&self, x: &[f64]) -> Vec<f64> {
        (self.curvature)(x)
    }

    pub fn algebra(&self) -> &Bracket {
        &self.algebra
    }

    fn assemble(n: usize, algebra: &Bracket, f: &[f64]) -> Bracket {
        let k = algebra.dim();
        let mut c = Bracket::zeros(n + k);
        for al in 0..k {
            for a in 0..n {
                for b in 0..n {
                    c.set(n + al, a, b, f[(al * n + a) * n + b]);
                }
            }
        }
        for g in 0..k {
            for al in 0..k {
                for be in 0..k {
                    c.set(n + g, n + al, n + be, algebra.get(g, al, be));
                }
            }
        }
        c
    }

    /// The algebroid structure functions of the trivialization.
    pub fn algebroid(&self) -> LocalAlgebroid {
        let n = self.base_dim;
        let k = self.algebra.dim();
        let m = n + k;
        let algebra = self.algebra.clone();
        let curv = self.curvature.clone();
        let mut alg = LocalAlgebroid::new(
            "atiyah",
            n,
            m,
            move |_| {
                let mut r = DMatrix::zeros(n, m);
                r.view_mut((0, 0), (n, n)).fill_with_identity();
                r
            },
            move |x| Self::assemble(n, &algebra, &curv(x)),
        )
        .with_anchor_jet(move |_| vec![DMatrix::zeros(n, m); n]);
        if let Some(jet) = self.curvature_jet.clone() {
            let zero = Bracket::zeros(k);
            alg = alg.with_bracket_jet(move |x| {
                jet(x).iter().map(|d| Self::assemble(n, &zero, d)).collect()
            });
        }
        alg
    }

    /// Hamiltonian field written directly in `(x, p, zeta)` coordinates:
    /// `xdot^a = dh/dp_a`, `pdot_b = zeta_alpha F^alpha_{ab} dh/dp_a - dh/dx^b`,
    /// `zetadot_beta = zeta_gamma C^gamma_{alpha beta} dh/dzeta_alpha`.
    ///
    /// `grad_x` is `dh/dx`, `grad_fiber` is `(dh/dp, dh/dzeta)`.
    pub fn hamiltonian_field(
        &self,
        x: &[f64],
        zeta: &[f64],
        grad_x: &[f64],
        grad_fiber: &[f64],
    ) -> TangentVector {
        let n = self.base_dim;
        let k = self.algebra.dim();
        let f = self.curvature(x);
        let (hp, hz) = grad_fiber.split_at(n);
        let base = hp.to_vec();
        let mut fiber = vec![0.0; n + k];
        for b in 0..n {
            let mut s = -grad_x[b];
            for al in 0..k {
                for a in 0..n {
                    s += zeta[al] * f[(al * n + a) * n + b] * hp[a];
                }
            }
            fiber[b] = s;
        }
        for be in 0..k {
            let mut s = 0.0;
            for g in 0..k {
                for al in 0..k {
                    s += zeta[g] * self.algebra.get(g, al, be) * hz[al];
                }
            }
            fiber[n + be] = s;
        }
        TangentVector { base, fiber }
    }
}

/// Largest `|mu(e_j, e_l)|` between a frame vector of `D` (first `rank` columns)
/// and one of the supplied complement.
pub fn frame_orthogonality_defect(metric: &DMatrix<f64>, frame: &DMatrix<f64>, rank: usize) -> f64 {
    let g = frame.transpose() * metric * frame;
    let mut worst: f64 = 0.0;
    for j in 0..rank {
        for l in rank..frame.ncols() {
            worst = worst.max(g[(j, l)].abs());
        }
    }
    worst
}

/// Shorthand for `AtiyahData::new(..)?.algebroid()`.
pub fn atiyah_trivialized(
    base_dim: usize,
    algebra: Bracket,
    curvature: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
) -> Result<LocalAlgebroid> {
    Ok(AtiyahData::new(base_dim, algebra, curvature)?.algebroid())
}

/// Restricts `alg` to the subbundle `D` spanned by the first `rank` columns of a
/// constant frame, projecting the bracket along the remaining columns.
///
/// The complement columns are taken as given; a complement that is not
/// `metric`-orthogonal to `D` yields a different projection, see
/// [`frame_orthogonality_defect`].
pub fn nonholonomic_restriction(
    alg: &LocalAlgebroid,
    metric: impl Fn(&[f64]) -> DMatrix<f64>,
    frame: &DMatrix<f64>,
    rank: usize,
) -> Result<LocalAlgebroid> {
    let m = alg.m();
    if frame.nrows() != m || frame.ncols() != m {
        return Err(Error::DimensionMismatch {
            what: "frame",
            expected: m,
            found: frame.nrows().max(frame.ncols()),
        });
    }
    if rank == 0 || rank > m {
        return Err(Error::DimensionMismatch {
            what: "restriction rank",
            expected: m,
            found: rank,
        });
    }
    let inv = frame.clone().try_inverse().ok_or(Error::SingularFrame)?;
    for x in alg.sample_points(100) {
        let g = metric(&x);
        let sym = (&g - g.transpose()).amax();
        if g.nrows() != m || sym > 1e-12 || g.clone().cholesky().is_none() {
            return Err(Error::MetricNotSpd(x));
        }
    }
    let fd = frame.columns(0, rank).into_owned();
    let transform = {
        let frame = frame.clone();
        move |c: &Bracket| -> Bracket {
            let mut out = Bracket::zeros(rank);
            for j in 0..rank {
                for l in 0..rank {
                    let w = c.apply(frame.column(j).as_slice(), frame.column(l).as_slice());
                    let z = &inv * nalgebra::DVector::from_vec(w);
                    for i in 0..rank {
                        out.set(i, j, l, z[i]);
                    }
                }
            }
            out
        }
    };
    let n = alg.n();
    let (r, c) = (alg.anchor_fn().clone(), alg.bracket_fn().clone());
    let fd_a = fd.clone();
    let t = transform.clone();
    let mut out = LocalAlgebroid::new(
        format!("{}|D", alg.name()),
        n,
        rank,
        move |x| r(x) * &fd_a,
        move |x| t(&c(x)),
    )
    .with_domain(alg.domain().clone())
    .with_fd_step(alg.fd_step());
    if let Some(j) = alg.anchor_jet_fn().cloned() {
        out = out.with_anchor_jet(move |x| j(x).iter().map(|d| d * &fd).collect());
    }
    if let Some(j) = alg.bracket_jet_fn().cloned() {
        out = out.with_bracket_jet(move |x| j(x).iter().map(&transform).collect());
    }
    Ok(out)
}
