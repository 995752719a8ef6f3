use super::*;
use crate::algebroid::tangent;
use crate::control::{solve_extremal, ExtremalOptions, HorizonMode};
use crate::dynamics::{integrate_base, Steps};

fn scalar_problem() -> ControlProblem {
    ControlProblem::new(
        tangent(1),
        |_, u| vec![u[0]],
        |_, u| u[0] * u[0],
        ControlSet::Finite(vec![vec![0.0], vec![1.0]]),
    )
}

fn pendulum() -> ControlProblem {
    ControlProblem::new(
        tangent(2),
        |x, u| vec![x[1], u[0] - x[0].sin()],
        |x, u| x[0] * x[0] + 0.5 * u[0] * u[0],
        ControlSet::Finite(vec![vec![-1.0], vec![1.0]]),
    )
}

fn pendulum_control() -> PiecewiseControl {
    PiecewiseControl::new(vec![0.0, 0.8, 2.0], vec![vec![1.0], vec![-1.0]]).unwrap()
}

fn time_optimal() -> ControlProblem {
    ControlProblem::new(
        tangent(2),
        |x, u| vec![x[1], u[0]],
        |_, _| 1.0,
        ControlSet::Finite(vec![vec![-1.0], vec![1.0]]),
    )
}

#[test]
fn symbol_validation() {
    let e = |tau: f64, dt: f64| NeedleEntry {
        tau,
        v: vec![1.0],
        dt,
    };
    assert!(NeedleSymbol::new(vec![e(0.5, -1.0)], 0.6, 0.0).is_err());
    assert!(NeedleSymbol::new(vec![e(0.5, 1.0), e(0.4, 1.0)], 0.6, 0.0).is_err());
    assert!(NeedleSymbol::new(vec![e(0.7, 1.0)], 0.6, 0.0).is_err());
    let u = pendulum_control();
    let at_switch = NeedleSymbol::single(0.8, vec![1.0], 1.0).unwrap();
    assert!(matches!(
        at_switch.validate_for(&u),
        Err(Error::NotRegular(_))
    ));
    let at_start = NeedleSymbol::single(0.0, vec![1.0], 1.0).unwrap();
    assert!(at_start.validate_for(&u).is_err());
}

#[test]
fn zero_lengths_leave_control_unchanged() {
    let u = pendulum_control();
    let sym = NeedleSymbol::new(
        vec![NeedleEntry {
            tau: 0.3,
            v: vec![-1.0],
            dt: 0.0,
        }],
        1.5,
        0.0,
    )
    .unwrap();
    assert_eq!(needle_control(&u, &sym, 0.1).unwrap(), u);
}

#[test]
fn single_needle_replaces_interval() {
    let u = pendulum_control();
    let sym = NeedleSymbol::single(0.5, vec![-1.0], 2.0).unwrap();
    let v = needle_control(&u, &sym, 0.01).unwrap();
    assert_eq!(v.breakpoints().len(), 5);
    assert!((v.breakpoints()[1] - 0.48).abs() < 1e-15);
    assert_eq!(v.breakpoints()[2], 0.5);
    assert_eq!(v.values(), &[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]);
}

#[test]
fn horizon_change_shifts_tail() {
    let u = pendulum_control();
    let sym = NeedleSymbol::new(Vec::new(), 0.5, 1.0).unwrap();
    let v = needle_control(&u, &sym, 0.1).unwrap();
    assert!((v.t1() - 2.1).abs() < 1e-15);
    assert!((v.breakpoints()[1] - 0.9).abs() < 1e-15);
    let shorter = NeedleSymbol::new(Vec::new(), 1.5, -1.0).unwrap();
    let w = needle_control(&u, &shorter, 0.1).unwrap();
    assert!((w.t1() - 1.9).abs() < 1e-15);
    assert_eq!(w.breakpoints()[1], 0.8);
}

#[test]
fn stacked_entries_follow_offsets() {
    // Two needles at tau with dt = 1: the group ends at tau + s dt.
    let u = pendulum_control();
    let sym = NeedleSymbol::new(
        vec![
            NeedleEntry {
                tau: 1.5,
                v: vec![1.0],
                dt: 1.0,
            },
            NeedleEntry {
                tau: 1.5,
                v: vec![-1.0],
                dt: 2.0,
            },
        ],
        1.5,
        1.0,
    )
    .unwrap();
    assert_eq!(sym.offsets(), vec![-2.0, -1.0]);
    let v = needle_control(&u, &sym, 0.1).unwrap();
    let bp: Vec<f64> = v.breakpoints().to_vec();
    assert!((bp[2] - 1.3).abs() < 1e-14 && (bp[3] - 1.4).abs() < 1e-14);
    assert_eq!(v.values()[2], vec![1.0]);
}

#[test]
fn large_parameter_rejected() {
    let u = pendulum_control();
    let sym = NeedleSymbol::single(0.1, vec![-1.0], 1.0).unwrap();
    assert!(matches!(
        needle_control(&u, &sym, 0.5),
        Err(Error::VariationTooLarge(_))
    ));
    let two = NeedleSymbol::new(
        vec![
            NeedleEntry {
                tau: 0.3,
                v: vec![-1.0],
                dt: 1.0,
            },
            NeedleEntry {
                tau: 0.4,
                v: vec![-1.0],
                dt: 1.0,
            },
        ],
        0.5,
        0.0,
    )
    .unwrap();
    assert!(needle_control(&u, &two, 0.05).is_ok());
    assert!(matches!(
        needle_control(&u, &two, 0.2),
        Err(Error::VariationTooLarge(_))
    ));
}

#[test]
fn constant_flow_variation() {
    let p = scalar_problem();
    let u = PiecewiseControl::constant(0.0, 1.0, vec![0.0]).unwrap();
    let path = integrate_base(&p, &u, &[0.0], Steps::PerSegment(50)).unwrap();
    let sym = NeedleSymbol::single(0.4, vec![1.0], 1.0).unwrap();
    let d = infinitesimal_variation(&p, &u, &path, &sym).unwrap();
    assert!((d[0] - 1.0).abs() < 1e-13 && (d[1] - 1.0).abs() < 1e-13);
    let time_only = NeedleSymbol::new(Vec::new(), 0.4, 1.0).unwrap();
    let d = infinitesimal_variation(&p, &u, &path, &time_only).unwrap();
    assert!(d.iter().all(|v| v.abs() < 1e-15));
}

fn fd_endpoint(
    p: &ControlProblem,
    u: &PiecewiseControl,
    x0: &[f64],
    sym: &NeedleSymbol,
    s: f64,
) -> Vec<f64> {
    let steps = Steps::MaxStep { h: 2e-3, min: 1 };
    let base = integrate_base(p, u, x0, steps).unwrap();
    let var = integrate_base(p, &needle_control(u, sym, s).unwrap(), x0, steps).unwrap();
    let mut out: Vec<f64> = var
        .x_end()
        .iter()
        .zip(base.x_end())
        .map(|(a, b)| (a - b) / s)
        .collect();
    out.push((var.cost_end().unwrap() - base.cost_end().unwrap()) / s);
    out
}

#[test]
fn finite_differences_converge_to_variation() {
    let p = pendulum();
    let u = pendulum_control();
    let x0 = [0.3, 0.0];
    let path = integrate_base(&p, &u, &x0, Steps::MaxStep { h: 2e-3, min: 1 }).unwrap();
    let sym = NeedleSymbol::new(
        vec![
            NeedleEntry {
                tau: 0.5,
                v: vec![-1.0],
                dt: 1.0,
            },
            NeedleEntry {
                tau: 1.2,
                v: vec![1.0],
                dt: 0.5,
            },
        ],
        1.6,
        0.7,
    )
    .unwrap();
    let d = infinitesimal_variation(&p, &u, &path, &sym).unwrap();
    let scale = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&s| {
            let fd = fd_endpoint(&p, &u, &x0, &sym, s);
            fd.iter()
                .zip(&d)
                .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
                / scale
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-3, "{errs:?}");
    // First order: a tenfold smaller parameter gives roughly a tenfold smaller error.
    assert!(
        errs[0] / errs[1] > 5.0 && errs[0] / errs[1] < 20.0,
        "{errs:?}"
    );
}

#[test]
fn variation_is_linear_in_lengths() {
    let p = pendulum();
    let u = pendulum_control();
    let path = integrate_base(&p, &u, &[0.3, 0.0], Steps::MaxStep { h: 1e-2, min: 1 }).unwrap();
    let make = |a: f64, b: f64, dt: f64| {
        NeedleSymbol::new(
            vec![
                NeedleEntry {
                    tau: 0.5,
                    v: vec![-1.0],
                    dt: a,
                },
                NeedleEntry {
                    tau: 1.2,
                    v: vec![1.0],
                    dt: b,
                },
            ],
            1.6,
            dt,
        )
        .unwrap()
    };
    let d1 = infinitesimal_variation(&p, &u, &path, &make(1.0, 0.0, 0.0)).unwrap();
    let d2 = infinitesimal_variation(&p, &u, &path, &make(0.0, 1.0, 0.0)).unwrap();
    let d3 = infinitesimal_variation(&p, &u, &path, &make(0.0, 0.0, 1.0)).unwrap();
    let mix = infinitesimal_variation(&p, &u, &path, &make(0.3, 2.0, -0.4)).unwrap();
    for i in 0..3 {
        let want = 0.3 * d1[i] + 2.0 * d2[i] - 0.4 * d3[i];
        assert!((mix[i] - want).abs() < 1e-12);
    }
}

#[test]
fn cone_without_probes_is_a_line() {
    let p = pendulum();
    let u = pendulum_control();
    let path = integrate_base(&p, &u, &[0.3, 0.0], Steps::PerSegment(100)).unwrap();
    let cone = build_cone(&p, &u, &path, 1.5, &[], &[]).unwrap();
    assert_eq!(cone.len(), 2);
    for (a, b) in cone.generators[0].iter().zip(&cone.generators[1]) {
        assert_eq!(*a, -b);
    }
    let d = infinitesimal_variation(
        &p,
        &u,
        &path,
        &NeedleSymbol::new(Vec::new(), 1.5, 1.0).unwrap(),
    )
    .unwrap();
    for (a, b) in cone.generators[0].iter().zip(&d) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cone_generators_match_single_needles() {
    let p = pendulum();
    let u = pendulum_control();
    let path = integrate_base(&p, &u, &[0.3, 0.0], Steps::PerSegment(100)).unwrap();
    let cone = build_cone(&p, &u, &path, 1.5, &[vec![-1.0], vec![1.0]], &[0.33, 1.1]).unwrap();
    assert_eq!(cone.len(), 6);
    let d = infinitesimal_variation(
        &p,
        &u,
        &path,
        &NeedleSymbol::single(1.1, vec![1.0], 1.0).unwrap(),
    )
    .unwrap();
    for (a, b) in cone.generators[3].iter().zip(&d) {
        assert!((a - b).abs() < 1e-9);
    }
    assert!(build_cone(&p, &u, &path, 1.5, &[], &[1.7]).is_err());
}

#[test]
fn transported_subspace_matches_extended_transport() {
    let p = pendulum();
    let u = pendulum_control();
    let steps = Steps::MaxStep { h: 1e-2, min: 1 };
    let path = integrate_base(&p, &u, &[0.3, 0.0], steps).unwrap();
    let v = transport_subspace(&p, &u, &path, &[vec![1.0, 0.0, 0.0]]).unwrap();
    let ext = extend_system(&p);
    let mut x0 = path.x_start().to_vec();
    x0.push(0.0);
    let ext_path = integrate_base(&ext, &u, &x0, steps).unwrap();
    let b = crate::control::parallel_transport(&ext, &u, &ext_path, &[1.0, 0.0, 0.0]).unwrap();
    for (a, c) in v[0].iter().zip(b.end()) {
        assert!((a - c).abs() < 1e-10);
    }
    let cone = build_cone(&p, &u, &path, 1.5, &[], &[]).unwrap();
    assert_eq!(augment_cone(&cone, &[]).unwrap(), cone);
    assert_eq!(augment_cone(&cone, &v).unwrap().len(), 4);
}

fn cone_of(gens: &[&[f64]]) -> VariationCone {
    VariationCone {
        generators: gens.iter().map(|g| g.to_vec()).collect(),
        provenance: gens
            .iter()
            .map(|_| GeneratorSource::Time { sign: 1.0 })
            .collect(),
    }
}

#[test]
fn half_line_is_separated_from_ray() {
    let sep = separate_cone_ray(&cone_of(&[&[1.0, 0.0]]), &[0.0, -1.0], &[]).unwrap();
    assert!(sep.separable);
    let phi = sep.phi.unwrap();
    assert!(phi[0] <= 1e-12 && phi[1] <= -1.0 + 1e-12, "{phi:?}");
    assert!(sep.margins.iter().all(|m| *m >= -TOL_SEPARATION));
    assert!(sep.ray_margin >= -TOL_SEPARATION);
}

#[test]
fn whole_plane_is_not_separable() {
    let cone = cone_of(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]]);
    let sep = separate_cone_ray(&cone, &[0.3, -1.0], &[]).unwrap();
    assert!(!sep.separable);
    assert!(sep.violated.is_some());
    assert!(sep.phi.is_none());
}

#[test]
fn ray_inside_spanning_cone_is_not_separable() {
    // Generators lambda and lambda +- e_i with lambda on the ray.
    let lam = [0.0, 0.0, -1.0];
    let mut gens: Vec<Vec<f64>> = vec![lam.to_vec()];
    for i in 0..3 {
        for s in [1.0, -1.0] {
            let mut g = lam.to_vec();
            g[i] += s;
            gens.push(g);
        }
    }
    let refs: Vec<&[f64]> = gens.iter().map(Vec::as_slice).collect();
    assert!(
        !separate_cone_ray(&cone_of(&refs), &lam, &[])
            .unwrap()
            .separable
    );
}

#[test]
fn subspace_constraint_restricts_covector() {
    let cone = cone_of(&[&[1.0, 0.0, 0.0]]);
    let sep = separate_cone_ray(&cone, &[0.0, 0.0, -1.0], &[vec![0.0, 0.0, 1.0]]).unwrap();
    assert!(sep.separable);
    assert!(sep.phi.unwrap()[2].abs() < 1e-12);
}

#[test]
fn zero_generators_are_degenerate() {
    let sep = separate_cone_ray(&cone_of(&[&[0.0, 0.0]]), &[0.0, -1.0], &[]).unwrap();
    assert!(sep.separable && sep.degenerate);
}

#[test]
fn time_optimal_certificate_matches_extremal() {
    let p = time_optimal();
    let ex = solve_extremal(
        &p,
        &[0.0, 0.0],
        &[1.0, 0.5],
        -1.0,
        0.0,
        1.0,
        HorizonMode::Free,
        &ExtremalOptions {
            steps: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let path = ex.base_path(&p).unwrap();
    let tau = default_anchor_time(&ex.control, &path).unwrap();
    let cert =
        pmp_certificate(&p, &ex.control, &path, tau, &CertificateOptions::default()).unwrap();
    assert!(cert.separation.separable, "{:?}", cert.separation.objective);
    let phi = cert.phi.clone().unwrap();
    let mut want = ex.trajectory.xi_end().to_vec();
    want.push(-1.0);
    assert!(
        direction_mismatch(&phi, &want) < 1e-4,
        "{phi:?} vs {want:?}"
    );
    let rep = cert.report.unwrap();
    assert!(rep.passes(1e-6, true), "{rep:?}");
}

#[test]
fn wrong_bang_is_detected() {
    let p = time_optimal();
    // Optimal switch at 0.5; flip the control on (0.2, 0.4].
    let u = PiecewiseControl::new(
        vec![0.0, 0.2, 0.4, 0.5, 1.0],
        vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]],
    )
    .unwrap();
    let path = integrate_base(&p, &u, &[0.0, 0.0], Steps::MaxStep { h: 5e-3, min: 4 }).unwrap();
    let tau = default_anchor_time(&u, &path).unwrap();
    let cert = pmp_certificate(&p, &u, &path, tau, &CertificateOptions::default()).unwrap();
    assert!(!cert.separation.separable);
    assert!(cert.violated_generator().is_some());
}
