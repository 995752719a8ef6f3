//! The builtin example problems.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::algebroid::{
    hamiltonian_vector_field, nonholonomic_restriction, se2, so3, tangent, AlgebroidCovector,
    AnalyticHamiltonian, AtiyahData, Bracket, LocalAlgebroid,
};
use crate::control::HorizonMode;
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ControlSet};

use super::config::ScenarioConfig;

/// Registry entry of a builtin scenario.
#[derive(Clone, Copy, Debug)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Algebroid constructor the builtin is defined on.
    pub algebroid: &'static str,
    /// Tunable parameters with their defaults.
    pub params: &'static [(&'static str, &'static [f64])],
}

pub const BUILTINS: [BuiltinInfo; 6] = [
    BuiltinInfo {
        name: "so3_two_axis",
        description: "time-optimal rotation about two axes a +- b on so(3), bang-bang controls",
        algebroid: "lie_algebra",
        params: &[("problem.a", &[0.0, 0.0, 1.0]), ("problem.b", &[0.6, 0.0, 0.0])],
    },
    BuiltinInfo {
        name: "chaplygin_sleigh",
        description: "Chaplygin sleigh as an unconstrained problem on the constraint algebroid of se(2)",
        algebroid: "nonholonomic",
        params: &[
            ("algebroid.m", &[1.0]),
            ("algebroid.J", &[1.0]),
            ("algebroid.a", &[1.0]),
            ("algebroid.b", &[1.0]),
        ],
    },
    BuiltinInfo {
        name: "euler_poincare_rigid_body",
        description: "free rigid body on so(3) with diagonal inertia, Euler-Poincare extremals",
        algebroid: "lie_algebra",
        params: &[("problem.inertia", &[1.0, 2.0, 3.0])],
    },
    BuiltinInfo {
        name: "atiyah_hamiltonian_crosscheck",
        description: "Atiyah algebroid TR^2 x so(3) with varying curvature, explicit vs generic Hamiltonian field",
        algebroid: "atiyah",
        params: &[("algebroid.field", &[1.0]), ("problem.potential", &[0.5])],
    },
    BuiltinInfo {
        name: "tangent_lqr_1d",
        description: "scalar linear-quadratic regulator on TR, classical maximum principle",
        algebroid: "tangent",
        params: &[("problem.q", &[1.0]), ("problem.r", &[1.0])],
    },
    BuiltinInfo {
        name: "wong_residual_circle_bundle",
        description: "charged particle in a constant field: Wong equations on a circle bundle over R^2",
        algebroid: "atiyah",
        params: &[("algebroid.field", &[1.0])],
    },
];

/// Names and one-line descriptions of all builtins.
pub fn list_builtins() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|b| (b.name, b.description)).collect()
}

pub fn builtin_info(name: &str) -> Result<&'static BuiltinInfo> {
    BUILTINS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownName(name.to_string()))
}

/// Parameters of the Chaplygin sleigh: mass, inertia about the contact point,
/// centre of mass `(a, b)` in the body frame.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ChaplyginParams {
    pub m: f64,
    pub j: f64,
    pub a: f64,
    pub b: f64,
}

impl ChaplyginParams {
    /// Kinetic energy matrix on `D` in the coordinates `(y1, y2)`.
    pub fn mass_matrix(&self) -> Matrix2<f64> {
        let ChaplyginParams { m, j, a, b } = *self;
        Matrix2::new(j + m * (a * a + b * b), -b * m, -b * m, m)
    }

    /// Kinetic energy matrix on se(2) in the basis `(E1, E2, E3)`.
    pub fn metric(&self) -> DMatrix<f64> {
        let ChaplyginParams { m, j, a, b } = *self;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                m,
                0.0,
                -b * m,
                0.0,
                m,
                -a * m,
                -b * m,
                -a * m,
                j + m * (a * a + b * b),
            ],
        )
    }

    /// Frame `e1 = E3`, `e2 = E1`, `e3 = -ma E3 - mab E1 + (J + ma^2) E2` as columns.
    pub fn frame(&self) -> DMatrix<f64> {
        let ChaplyginParams { m, j, a, b } = *self;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                1.0,
                -m * a * b,
                0.0,
                0.0,
                j + m * a * a,
                1.0,
                0.0,
                -m * a,
            ],
        )
    }

    /// Right-hand sides of `M ydot = (-ma y1 y2, ma y1^2)`.
    pub fn eom_rhs(&self, y: &[f64]) -> [f64; 2] {
        let k = self.m * self.a;
        [-k * y[0] * y[1], k * y[0] * y[0]]
    }

    pub fn algebroid(&self) -> Result<LocalAlgebroid> {
        let g = self.metric();
        Ok(
            nonholonomic_restriction(&se2(), move |_| g.clone(), &self.frame(), 2)?
                .with_name("chaplygin_d"),
        )
    }
}

/// Scenario-specific data used by the checks.
#[derive(Clone)]
pub enum ScenarioKind {
    So3TwoAxis { a: Vec<f64>, b: Vec<f64> },
    Chaplygin(ChaplyginParams),
    EulerPoincare { inertia: Vec<f64> },
    AtiyahCrosscheck { data: AtiyahData, potential: f64 },
    TangentLqr { q: f64, r: f64 },
    Wong { data: AtiyahData, field: f64 },
}

/// A fully specified problem with initial data and numerical settings.
#[derive(Clone)]
pub struct Scenario {
    pub info: &'static BuiltinInfo,
    pub problem: ControlProblem,
    pub x0: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi0: f64,
    pub t0: f64,
    pub t1: f64,
    pub mode: HorizonMode,
    pub steps: usize,
    pub tol: f64,
    pub kind: ScenarioKind,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        self.info.name
    }

    /// Initial vector of the pairing test, in the extended fiber.
    pub fn pairing_vector(&self) -> Vec<f64> {
        let m = self.problem.alg().m();
        (0..=m)
            .map(|i| (-0.5_f64).powi(i as i32) * if i == m { 0.3 } else { 1.0 })
            .collect()
    }
}

struct Params<'a> {
    info: &'static BuiltinInfo,
    given: &'a BTreeMap<String, Vec<f64>>,
}

impl Params<'_> {
    fn get(&self, key: &str, len: usize) -> Result<Vec<f64>> {
        let default = self
            .info
            .params
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("parameter is registered");
        let v = self
            .given
            .get(key)
            .map_or_else(|| default.to_vec(), Clone::clone);
        if v.len() != len {
            return Err(Error::Config(format!(
                "{key}: expected {len} values, found {}",
                v.len()
            )));
        }
        Ok(v)
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        Ok(self.get(key, 1)?[0])
    }
}

fn take_vec(v: &Option<Vec<f64>>, default: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    match v {
        Some(v) if v.len() != default.len() => Err(Error::Config(format!(
            "{what}: expected {} values, found {}",
            default.len(),
            v.len()
        ))),
        Some(v) => Ok(v.clone()),
        None => Ok(default),
    }
}

/// Builds the scenario described by `cfg`.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let info = builtin_info(&cfg.scenario)?;
    if let Some(name) = &cfg.algebroid {
        if name != info.algebroid {
            return Err(Error::Config(format!(
                "{} is defined on '{}', not '{name}'",
                info.name, info.algebroid
            )));
        }
    }
    if let Some(k) = cfg
        .params
        .keys()
        .find(|k| !info.params.iter().any(|(p, _)| p == k))
    {
        return Err(Error::Config(format!(
            "{} has no parameter '{k}'",
            info.name
        )));
    }
    let p = Params {
        info,
        given: &cfg.params,
    };
    let mut sc = match info.name {
        "so3_two_axis" => so3_two_axis(info, p.get("problem.a", 3)?, p.get("problem.b", 3)?),
        "chaplygin_sleigh" => chaplygin_sleigh(
            info,
            ChaplyginParams {
                m: p.scalar("algebroid.m")?,
                j: p.scalar("algebroid.J")?,
                a: p.scalar("algebroid.a")?,
                b: p.scalar("algebroid.b")?,
            },
        )?,
        "euler_poincare_rigid_body" => euler_poincare(info, p.get("problem.inertia", 3)?)?,
        "atiyah_hamiltonian_crosscheck" => atiyah_crosscheck(
            info,
            p.scalar("algebroid.field")?,
            p.scalar("problem.potential")?,
        )?,
        "tangent_lqr_1d" => tangent_lqr(info, p.scalar("problem.q")?, p.scalar("problem.r")?)?,
        "wong_residual_circle_bundle" => wong_circle(info, p.scalar("algebroid.field")?)?,
        _ => unreachable!("registry and builders agree"),
    };
    sc.x0 = take_vec(&cfg.x0, sc.x0, "initial.x0")?;
    sc.xi = take_vec(&cfg.xi, sc.xi, "initial.xi")?;
    if let Some(v) = cfg.xi0 {
        if v != 0.0 && v != -1.0 {
            return Err(Error::Config("initial.xi0: expected -1 or 0".into()));
        }
        sc.xi0 = v;
    }
    sc.t0 = cfg.t0.unwrap_or(sc.t0);
    sc.t1 = cfg.t1.unwrap_or(sc.t1);
    if !(sc.t1 > sc.t0) {
        return Err(Error::Config("horizon.t1 must exceed horizon.t0".into()));
    }
    if let Some(free) = cfg.free {
        sc.mode = if free {
            HorizonMode::Free
        } else {
            HorizonMode::Fixed
        };
    }
    sc.steps = cfg.steps.unwrap_or(sc.steps);
    sc.tol = cfg.tol.unwrap_or(sc.tol);
    if let (ScenarioKind::TangentLqr { q, r }, None) = (&sc.kind, &cfg.xi) {
        sc.xi = vec![lqr_closed_form(*q, *r, sc.x0[0], sc.t1 - sc.t0, 0.0).1];
    }
    Ok(sc)
}

/// The builtin with its default settings.
pub fn builtin(name: &str) -> Result<Scenario> {
    build_scenario(&ScenarioConfig::builtin(name))
}

fn so3_two_axis(info: &'static BuiltinInfo, a: Vec<f64>, b: Vec<f64>) -> Scenario {
    let (fa, fb) = (a.clone(), b.clone());
    let problem = ControlProblem::new(
        so3(),
        move |_, u| (0..3).map(|i| fa[i] + u[0] * fb[i]).collect(),
        |_, _| 1.0,
        ControlSet::Finite(vec![vec![-1.0], vec![1.0]]),
    );
    Scenario {
        info,
        problem,
        x0: Vec::new(),
        xi: vec![0.3, 1.0, 0.2],
        xi0: -1.0,
        t0: 0.0,
        t1: 8.0,
        mode: HorizonMode::Free,
        steps: 400,
        tol: 1e-6,
        kind: ScenarioKind::So3TwoAxis { a, b },
    }
}

fn chaplygin_sleigh(info: &'static BuiltinInfo, params: ChaplyginParams) -> Result<Scenario> {
    let mm = params.mass_matrix();
    let inv = mm
        .try_inverse()
        .ok_or(Error::MetricNotSpd(vec![params.m, params.j]))?;
    let problem = ControlProblem::new(
        params.algebroid()?,
        |_, u| u.to_vec(),
        move |_, u| {
            0.5 * (mm[(0, 0)] * u[0] * u[0]
                + 2.0 * mm[(0, 1)] * u[0] * u[1]
                + mm[(1, 1)] * u[1] * u[1])
        },
        ControlSet::analytic(2, move |_, xi, xi0| {
            let y = inv * nalgebra::Vector2::new(xi[0], xi[1]) / -xi0;
            vec![y[0], y[1]]
        }),
    )
    .with_cost_gradient(|_, _| Vec::new());
    Ok(Scenario {
        info,
        problem,
        x0: Vec::new(),
        xi: vec![1.0, 0.5],
        xi0: -1.0,
        t0: 0.0,
        t1: 2.0,
        mode: HorizonMode::Fixed,
        steps: 400,
        tol: 1e-6,
        kind: ScenarioKind::Chaplygin(params),
    })
}

fn euler_poincare(info: &'static BuiltinInfo, inertia: Vec<f64>) -> Result<Scenario> {
    if inertia.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::MetricNotSpd(inertia));
    }
    let (i1, i2) = (inertia.clone(), inertia.clone());
    let problem = ControlProblem::new(
        so3(),
        |_, u| u.to_vec(),
        move |_, u| 0.5 * (0..3).map(|k| i1[k] * u[k] * u[k]).sum::<f64>(),
        ControlSet::analytic(3, move |_, xi, xi0| {
            (0..3).map(|k| xi[k] / (i2[k] * -xi0)).collect()
        }),
    )
    .with_cost_gradient(|_, _| Vec::new());
    Ok(Scenario {
        info,
        problem,
        x0: Vec::new(),
        xi: vec![1.0, 0.5, -0.8],
        xi0: -1.0,
        t0: 0.0,
        t1: 5.0,
        mode: HorizonMode::Fixed,
        steps: 500,
        tol: 1e-6,
        kind: ScenarioKind::EulerPoincare { inertia },
    })
}

/// Curvature `F^alpha_{12} = field * (sin x1, x1 x2, cos x2)` with values in so(3).
pub fn crosscheck_atiyah(field: f64) -> Result<AtiyahData> {
    let layout = |g: [f64; 3]| {
        let mut f = vec![0.0; 12];
        for (al, v) in g.iter().enumerate() {
            f[al * 4 + 1] = *v;
            f[al * 4 + 2] = -*v;
        }
        f
    };
    let algebra = Bracket::from_skew_entries(3, &[(2, 0, 1, 1.0), (0, 1, 2, 1.0), (1, 2, 0, 1.0)]);
    Ok(AtiyahData::new(2, algebra, move |x| {
        layout([field * x[0].sin(), field * x[0] * x[1], field * x[1].cos()])
    })?
    .with_curvature_jet(move |x| {
        vec![
            layout([field * x[0].cos(), field * x[1], 0.0]),
            layout([0.0, field * x[0], -field * x[1].sin()]),
        ]
    }))
}

fn atiyah_crosscheck(info: &'static BuiltinInfo, field: f64, potential: f64) -> Result<Scenario> {
    let data = crosscheck_atiyah(field)?;
    let problem = ControlProblem::new(
        data.algebroid(),
        |_, u| u.to_vec(),
        move |x, u| {
            0.5 * u.iter().map(|v| v * v).sum::<f64>()
                + 0.5 * potential * (x[0] * x[0] + x[1] * x[1])
        },
        ControlSet::analytic(5, |_, xi, xi0| xi.iter().map(|v| v / -xi0).collect()),
    )
    .with_f_jacobian(|_, _| DMatrix::zeros(5, 2))
    .with_cost_gradient(move |x, _| vec![potential * x[0], potential * x[1]]);
    Ok(Scenario {
        info,
        problem,
        x0: vec![0.2, -0.1],
        xi: vec![0.5, -0.3, 0.4, 0.2, -0.6],
        xi0: -1.0,
        t0: 0.0,
        t1: 2.0,
        mode: HorizonMode::Fixed,
        steps: 400,
        tol: 1e-6,
        kind: ScenarioKind::AtiyahCrosscheck { data, potential },
    })
}

/// Largest difference between the explicit Atiyah Hamiltonian field and the
/// generic one for `h = |xi|^2 / 2 - potential |x|^2 / 2` over `points`,
/// each point being `(x, xi)` concatenated.
pub fn atiyah_field_mismatch(
    data: &AtiyahData,
    potential: f64,
    points: &[Vec<f64>],
) -> Result<f64> {
    let alg = data.algebroid();
    let n = data.base_dim();
    let h = AnalyticHamiltonian {
        value: move |x: &[f64], xi: &[f64]| {
            0.5 * xi.iter().map(|v| v * v).sum::<f64>()
                - 0.5 * potential * x.iter().map(|v| v * v).sum::<f64>()
        },
        gradient: move |x: &[f64], xi: &[f64]| {
            (x.iter().map(|v| -potential * v).collect(), xi.to_vec())
        },
    };
    let mut worst: f64 = 0.0;
    for p in points {
        let (x, xi) = p.split_at(n);
        let generic = hamiltonian_vector_field(
            &alg,
            &h,
            &AlgebroidCovector {
                x: x.to_vec(),
                xi: xi.to_vec(),
            },
        )?;
        let (gx, gxi) = crate::algebroid::Hamiltonian::gradient(&h, x, xi);
        let explicit = data.hamiltonian_field(x, &xi[n..], &gx, &gxi);
        for (a, b) in generic
            .base
            .iter()
            .chain(&generic.fiber)
            .zip(explicit.base.iter().chain(&explicit.fiber))
        {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn tangent_lqr(info: &'static BuiltinInfo, q: f64, r: f64) -> Result<Scenario> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::Config(
            "problem.q and problem.r must be positive".into(),
        ));
    }
    let problem = ControlProblem::new(
        tangent(1),
        |_, u| vec![u[0]],
        move |x, u| 0.5 * (q * x[0] * x[0] + r * u[0] * u[0]),
        ControlSet::analytic(1, move |_, xi, xi0| vec![xi[0] / (r * -xi0)]),
    )
    .with_f_jacobian(|_, _| DMatrix::zeros(1, 1))
    .with_cost_gradient(move |x, _| vec![q * x[0]]);
    let (x0, t1) = (1.0, 1.5);
    Ok(Scenario {
        info,
        problem,
        x0: vec![x0],
        xi: vec![lqr_closed_form(q, r, x0, t1, 0.0).1],
        xi0: -1.0,
        t0: 0.0,
        t1,
        mode: HorizonMode::Fixed,
        steps: 300,
        tol: 1e-6,
        kind: ScenarioKind::TangentLqr { q, r },
    })
}

/// `(x(t), xi(t))` of the regulator with free endpoint on `[0, t1]`.
pub fn lqr_closed_form(q: f64, r: f64, x0: f64, t1: f64, t: f64) -> (f64, f64) {
    let w = (q / r).sqrt();
    let c = (w * t1).cosh();
    (
        x0 * (w * (t1 - t)).cosh() / c,
        -r * w * x0 * (w * (t1 - t)).sinh() / c,
    )
}

/// Abelian circle bundle over R^2 with constant curvature `F_{12} = field`.
pub fn circle_bundle(field: f64) -> Result<AtiyahData> {
    Ok(
        AtiyahData::new(2, Bracket::zeros(1), move |_| vec![0.0, field, -field, 0.0])?
            .with_curvature_jet(|_| vec![vec![0.0; 4]; 2]),
    )
}

fn wong_circle(info: &'static BuiltinInfo, field: f64) -> Result<Scenario> {
    let data = circle_bundle(field)?;
    let problem = ControlProblem::new(
        data.algebroid(),
        |_, u| vec![u[0], u[1], 0.0],
        |_, u| 0.5 * (u[0] * u[0] + u[1] * u[1]),
        ControlSet::analytic(2, |_, xi, xi0| vec![xi[0] / -xi0, xi[1] / -xi0]),
    )
    .with_f_jacobian(|_, _| DMatrix::zeros(3, 2))
    .with_cost_gradient(|_, _| vec![0.0, 0.0]);
    Ok(Scenario {
        info,
        problem,
        x0: vec![0.0, 0.0],
        xi: vec![1.0, 0.0, 1.0],
        xi0: -1.0,
        t0: 0.0,
        t1: 2.0 * std::f64::consts::PI,
        mode: HorizonMode::Fixed,
        steps: 400,
        tol: 1e-6,
        kind: ScenarioKind::Wong { data, field },
    })
}

/// Minimum-norm preimage of `v` under the anchor at `x`.
pub(crate) fn anchor_preimage(alg: &LocalAlgebroid, x: &[f64], v: &[f64]) -> Vec<f64> {
    let rho = alg.anchor(x);
    let pinv = rho
        .clone()
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(alg.m(), alg.n()));
    (pinv * DVector::from_column_slice(v)).as_slice().to_vec()
}
