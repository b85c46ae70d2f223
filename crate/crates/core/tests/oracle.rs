use std::f64::consts::PI;

use prandtl_core::experiments::{mms_study, MmsProblem};
use prandtl_core::grid::staggered_divergence;
use prandtl_core::nash_moser::{default_perturbation, prandtl_operator, Scheme};
use prandtl_core::oracle::{solve_nonlinear, OracleConfig};
use prandtl_core::shear_flow::{ShearFlow, ShearProfile};
use prandtl_core::{Axis, Error, GridSpec};

fn shear(spec: &GridSpec) -> ShearFlow {
    ShearFlow::solve_heat_kernel(ShearProfile::erf_canonical(), spec).unwrap()
}

fn spec() -> GridSpec {
    GridSpec::new(0.25, 12.0, 1.0, 17, 16, 97).unwrap()
}

#[test]
fn zero_perturbation_reproduces_the_shear() {
    let s = spec();
    let sh = shear(&s);
    let sol = solve_nonlinear(&default_perturbation(&s, 0.0), &sh, &OracleConfig::default()).unwrap();
    assert!(sol.p.max_abs() < 1e-14);
    assert!(sol.u.sub(&sh.u_s).max_abs() < 1e-14);
    // against the closed form erf(y / (2 sqrt(1 + t)))
    let mut worst = 0.0_f64;
    for i in 0..s.n_t {
        for k in 0..s.n_y {
            let exact = libm::erf(s.y(k) / (2.0 * (1.0 + s.t(i)).sqrt()));
            worst = worst.max((sol.u.get(i, 3, k) - exact).abs());
        }
    }
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn small_perturbation_converges_and_stays_monotone() {
    let s = spec();
    let sh = shear(&s);
    let cfg = OracleConfig::default();
    let sol = solve_nonlinear(&default_perturbation(&s, 0.01), &sh, &cfg).unwrap();
    assert_eq!(sol.picard_iterations.len(), s.n_t);
    assert!(sol.picard_iterations[1..].iter().all(|n| (1..=cfg.picard_max).contains(n)));
    assert!(sol.p.max_abs() > 1e-3);
    // where the shear gradient is resolvable above rounding, d_y u stays positive
    let uy = sol.u.derivative(Axis::Y, 1).unwrap();
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            for k in 0..s.n_y {
                if sh.d_y_u_s.get(i, j, k) > 1e-8 {
                    assert!(uy.get(i, j, k) > 0.0, "({i},{j},{k})");
                }
            }
        }
    }
}

#[test]
fn converged_steps_satisfy_the_upwind_operator_and_divergence() {
    let s = spec();
    let sh = shear(&s);
    let cfg = OracleConfig { picard_max: 40, picard_tol: 1e-13, ..OracleConfig::default() };
    let sol = solve_nonlinear(&default_perturbation(&s, 0.01), &sh, &cfg).unwrap();
    assert!(staggered_divergence(&sol.p, &sol.v).unwrap().max_abs() < 1e-12);
    let r = prandtl_operator(&sh, &sol.p, &sol.v, Scheme::Upwind).unwrap();
    let mut worst = 0.0_f64;
    for i in 1..s.n_t {
        for j in 0..s.n_x {
            let line = r.line(i, j);
            worst = line[1..s.n_y - 1].iter().fold(worst, |m, v| m.max(v.abs()));
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn manufactured_solution_converges_at_first_order() {
    let study = mms_study(
        MmsProblem::Nonlinear,
        &ShearProfile::erf_canonical(),
        0.5,
        12.0,
        2.0 * PI,
        &[(9, 8, 32), (17, 16, 64), (33, 32, 128)],
    )
    .unwrap();
    assert!(study.order >= 0.9, "{study:?}");
}

#[test]
fn cfl_and_config_errors() {
    let s = GridSpec::new(1.0, 12.0, 1.0, 5, 64, 97).unwrap();
    let sh = shear(&s);
    let err = solve_nonlinear(&default_perturbation(&s, 0.01), &sh, &OracleConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Cfl { .. }));
    let bad = OracleConfig { picard_max: 0, ..OracleConfig::default() };
    assert!(matches!(
        solve_nonlinear(&default_perturbation(&s, 0.01), &sh, &bad),
        Err(Error::InvalidArgument(_))
    ));
}
