//! Residuals of the Wong equations for paths in a trivialized Atiyah algebroid.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebroid::AtiyahData;
use crate::control::derivative5;
use crate::dynamics::SampledPath;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WongReport {
    /// Largest component of `lambda0 mu Xdot - <zeta, F(X, .)>`.
    pub force_residual: f64,
    /// Largest component of `zetadot`.
    pub charge_residual: f64,
    pub max: f64,
}

/// Wong equations `lambda0 nabla_X X = <zeta, F(X, .)>^#` and `nabla_X zeta = 0`
/// for a constant base metric `mu`, in which case the covariant derivatives are
/// ordinary time derivatives. `path.a` holds the base velocities `X`, `zeta`
/// the charge at each node.
pub fn wong_residual(
    data: &AtiyahData,
    metric: &DMatrix<f64>,
    path: &SampledPath,
    zeta: &[Vec<f64>],
    lambda0: f64,
) -> Result<WongReport> {
    let n = data.base_dim();
    let k = data.algebra_dim();
    if metric.nrows() != n || metric.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "metric",
            expected: n * n,
            found: metric.nrows() * metric.ncols(),
        });
    }
    let vel = path.a.as_ref().ok_or(Error::DimensionMismatch {
        what: "velocity samples",
        expected: n,
        found: 0,
    })?;
    check_dim("charge samples", path.len(), zeta.len())?;
    let mut force: f64 = 0.0;
    let mut charge: f64 = 0.0;
    for &(s, e) in &path.segments {
        if e - s < 4 {
            return Err(Error::DimensionMismatch {
                what: "nodes per segment",
                expected: 5,
                found: e - s + 1,
            });
        }
        let xs: Vec<Vec<f64>> = vel[s..=e].iter().map(|v| v[..n].to_vec()).collect();
        let t = &path.t[s..=e];
        for j in 0..xs.len() {
            let x = &xs[j];
            let z = &zeta[s + j];
            check_dim("charge", k, z.len())?;
            let xdot = derivative5(t, &xs, 0, xs.len() - 1, j);
            let lhs = metric * DVector::from_column_slice(&xdot) * lambda0;
            let f = data.curvature(&path.x[s + j]);
            for b in 0..n {
                let mut rhs = 0.0;
                for al in 0..k {
                    for a in 0..n {
                        rhs += z[al] * f[(al * n + a) * n + b] * x[a];
                    }
                }
                force = force.max((lhs[b] - rhs).abs());
            }
            let zdot = derivative5(t, &zeta[s..=e], 0, e - s, j);
            charge = zdot.iter().fold(charge, |w, v| w.max(v.abs()));
        }
    }
    Ok(WongReport {
        force_residual: force,
        charge_residual: charge,
        max: force.max(charge),
    })
}
