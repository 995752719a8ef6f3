use nalgebra::DMatrix;

use super::{AlgebroidCovector, AlgebroidElement, LocalAlgebroid, FD_STEP};
use crate::error::{check_dim, Result};

/// A vector tangent to `E` or `E*`, split into base and fiber velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

/// A function on `E*`. The gradient falls back to central differences.
pub trait Hamiltonian {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64;

    /// `(dh/dx, dh/dxi)`.
    fn gradient(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = FD_STEP;
        let mut xp = x.to_vec();
        let gx = (0..x.len())
            .map(|a| {
                xp[a] = x[a] + h;
                let up = self.value(&xp, xi);
                xp[a] = x[a] - h;
                let dn = self.value(&xp, xi);
                xp[a] = x[a];
                (up - dn) / (2.0 * h)
            })
            .collect();
        let mut p = xi.to_vec();
        let gxi = (0..xi.len())
            .map(|i| {
                p[i] = xi[i] + h;
                let up = self.value(x, &p);
                p[i] = xi[i] - h;
                let dn = self.value(x, &p);
                p[i] = xi[i];
                (up - dn) / (2.0 * h)
            })
            .collect();
        (gx, gxi)
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64> Hamiltonian for F {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        self(x, xi)
    }
}

/// Hamiltonian with an analytic gradient.
pub struct AnalyticHamiltonian<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Hamiltonian for AnalyticHamiltonian<V, G>
where
    V: Fn(&[f64], &[f64]) -> f64,
    G: Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>),
{
    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        (self.value)(x, xi)
    }

    fn gradient(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.gradient)(x, xi)
    }
}

/// A section of `E`, `x -> X^i(x)`. The Jacobian (`m x n`) falls back to central differences.
pub trait Section {
    fn value(&self, x: &[f64]) -> Vec<f64>;

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let h = FD_STEP;
        let m = self.value(x).len();
        let mut jac = DMatrix::zeros(m, x.len());
        let mut xp = x.to_vec();
        for a in 0..x.len() {
            xp[a] = x[a] + h;
            let up = self.value(&xp);
            xp[a] = x[a] - h;
            let dn = self.value(&xp);
            xp[a] = x[a];
            for k in 0..m {
                jac[(k, a)] = (up[k] - dn[k]) / (2.0 * h);
            }
        }
        jac
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> Section for F {
    fn value(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// The linear function `xi -> <X(x), xi>` determined by a section.
pub struct LinearHamiltonian<'a, S: Section + ?Sized>(pub &'a S);

impl<S: Section + ?Sized> Hamiltonian for LinearHamiltonian<'_, S> {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.0.value(x).iter().zip(xi).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, x: &[f64], xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let jac = self.0.jacobian(x);
        let gx = (0..x.len())
            .map(|a| (0..xi.len()).map(|k| jac[(k, a)] * xi[k]).sum())
            .collect();
        (gx, self.0.value(x))
    }
}

/// Hamiltonian vector field on `E*`:
/// `xdot^a = rho^a_i dh/dxi_i`, `xidot_i = c^k_{ji} xi_k dh/dxi_j - rho^a_i dh/dx^a`.
pub fn hamiltonian_vector_field(
    alg: &LocalAlgebroid,
    h: &(impl Hamiltonian + ?Sized),
    p: &AlgebroidCovector,
) -> Result<TangentVector> {
    alg.check_point(&p.x)?;
    alg.check_fiber(&p.xi)?;
    let (gx, gxi) = h.gradient(&p.x, &p.xi);
    Ok(hamiltonian_field_from_gradient(alg, &p.x, &p.xi, &gx, &gxi))
}

pub(crate) fn hamiltonian_field_from_gradient(
    alg: &LocalAlgebroid,
    x: &[f64],
    xi: &[f64],
    gx: &[f64],
    gxi: &[f64],
) -> TangentVector {
    let (n, m) = (alg.n(), alg.m());
    let rho = alg.anchor(x);
    let c = alg.bracket(x);
    let base = (0..n)
        .map(|a| (0..m).map(|i| rho[(a, i)] * gxi[i]).sum())
        .collect();
    let mut fiber = c.coapply(gxi, xi);
    for (i, f) in fiber.iter_mut().enumerate() {
        for (a, g) in gx.iter().enumerate() {
            *f -= rho[(a, i)] * g;
        }
    }
    TangentVector { base, fiber }
}

/// Complete lift of a section evaluated at `e`:
/// `xdot^a = rho^a_i X^i`, `ydot^k = rho^a_i y^i d_a X^k + c^k_{ij} y^i X^j`.
pub fn complete_lift(
    alg: &LocalAlgebroid,
    section: &(impl Section + ?Sized),
    e: &AlgebroidElement,
) -> Result<TangentVector> {
    alg.check_point(&e.x)?;
    alg.check_fiber(&e.y)?;
    let f = section.value(&e.x);
    check_dim("section value", alg.m(), f.len())?;
    let jac = section.jacobian(&e.x);
    let base = alg.anchor_apply(&e.x, &f);
    let ry = alg.anchor_apply(&e.x, &e.y);
    let mut fiber = alg.bracket(&e.x).apply(&e.y, &f);
    for (k, v) in fiber.iter_mut().enumerate() {
        for (a, r) in ry.iter().enumerate() {
            *v += jac[(k, a)] * r;
        }
    }
    Ok(TangentVector { base, fiber })
}

/// Matrix of the linear Poisson structure on `E*` in coordinates `(x^a, xi_i)`,
/// arranged so that the Hamiltonian field is `P * grad h`.
pub fn linear_poisson_bivector(
    alg: &LocalAlgebroid,
    p: &AlgebroidCovector,
) -> Result<DMatrix<f64>> {
    alg.check_point(&p.x)?;
    alg.check_fiber(&p.xi)?;
    let (n, m) = (alg.n(), alg.m());
    let rho = alg.anchor(&p.x);
    let c = alg.bracket(&p.x);
    let mut mat = DMatrix::zeros(n + m, n + m);
    for a in 0..n {
        for i in 0..m {
            mat[(a, n + i)] = rho[(a, i)];
            mat[(n + i, a)] = -rho[(a, i)];
        }
    }
    for i in 0..m {
        for j in 0..m {
            mat[(n + i, n + j)] = (0..m).map(|k| c.get(k, j, i) * p.xi[k]).sum();
        }
    }
    Ok(mat)
}

/// The pairing of a vector tangent to `E` at `(x, y)` with one tangent to `E*`
/// at `(x, xi)` over the same base velocity: `ydot . xi + y . xidot`.
pub fn tangent_pairing(y: &[f64], lift: &TangentVector, xi: &[f64], field: &TangentVector) -> f64 {
    lift.fiber.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>()
        + y.iter().zip(&field.fiber).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{se2, tangent};

    #[test]
    fn tangent_linear_hamiltonian_gives_constant_velocity() {
        let alg = tangent(2);
        let h = |_: &[f64], p: &[f64]| 3.0 * p[0] - p[1];
        let v = hamiltonian_vector_field(
            &alg,
            &h,
            &AlgebroidCovector {
                x: vec![0.2, 0.1],
                xi: vec![1.0, 2.0],
            },
        )
        .unwrap();
        assert!((v.base[0] - 3.0).abs() < 1e-9 && (v.base[1] + 1.0).abs() < 1e-9);
        assert!(v.fiber.iter().all(|f| f.abs() < 1e-9));
    }

    #[test]
    fn lie_algebra_linear_hamiltonian() {
        // se(2), X = e_1: xidot_i = c^k_{0i} xi_k.
        let alg = se2();
        let xi = [0.3, -0.7, 1.1];
        let h = |_: &[f64], p: &[f64]| p[0];
        let v = hamiltonian_vector_field(
            &alg,
            &h,
            &AlgebroidCovector {
                x: vec![],
                xi: xi.to_vec(),
            },
        )
        .unwrap();
        assert!(v.base.is_empty());
        // [E1,E3] = -E2 is the only bracket involving E1.
        let expect = [0.0, 0.0, -xi[1]];
        for (a, b) in v.fiber.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{:?}", v.fiber);
        }
    }

    #[test]
    fn tangent_poisson_is_canonical() {
        let p = linear_poisson_bivector(
            &tangent(2),
            &AlgebroidCovector {
                x: vec![0.0, 0.0],
                xi: vec![1.0, 1.0],
            },
        )
        .unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                0., 0., 1., 0., 0., 0., 0., 1., -1., 0., 0., 0., 0., -1., 0., 0.,
            ],
        );
        assert_eq!(p, expect);
    }

    #[test]
    fn lift_of_constant_section_on_tangent_bundle() {
        let alg = tangent(2);
        let x_sec = |_: &[f64]| vec![0.5, -2.0];
        let l = complete_lift(
            &alg,
            &x_sec,
            &AlgebroidElement {
                x: vec![0.1, 0.2],
                y: vec![1.0, 3.0],
            },
        )
        .unwrap();
        assert_eq!(l.base, vec![0.5, -2.0]);
        assert!(l.fiber.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let alg = tangent(2);
        let h = |_: &[f64], p: &[f64]| p[0];
        assert!(hamiltonian_vector_field(
            &alg,
            &h,
            &AlgebroidCovector {
                x: vec![0.0],
                xi: vec![0.0, 0.0]
            }
        )
        .is_err());
    }
}
