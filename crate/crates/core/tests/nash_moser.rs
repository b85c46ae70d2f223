use std::f64::consts::PI;
use std::sync::Arc;

use prandtl_core::nash_moser::{
    default_perturbation, fit_decay_exponent, mollification_error, mollification_error_factored, prandtl_operator,
    run, stability_experiment, zeroth_approximation, IterationConfig, Scheme, StepRecord, StopReason,
};
use prandtl_core::shear_flow::{ShearFlow, ShearProfile};
use prandtl_core::{Axis, Error, Field, GridSpec, Plane};

fn shear(spec: &GridSpec) -> Arc<ShearFlow> {
    Arc::new(ShearFlow::solve_heat_kernel(ShearProfile::erf_canonical(), spec).unwrap())
}

fn quick_cfg() -> IterationConfig {
    IterationConfig { n_max: 2, track_lambda: false, ..IterationConfig::default() }
}

#[test]
fn first_layer_matches_the_closed_form() {
    // u~_0 = eps s(x) y e^{-y^2}, s = sin(kx):
    // u~_0^1 = d_y^2 u~_0 - (u^s + u~_0) d_x u~_0 - v_0 (d_y u~_0 + g)
    let s = GridSpec::new(0.25, 8.0, 1.0, 5, 64, 1601).unwrap();
    let sh = shear(&s);
    let eps = 0.01;
    let layers = zeroth_approximation(&default_perturbation(&s, eps), &sh, 1).unwrap().layers;
    let k = 2.0 * PI / s.l_x;
    // the centered x-difference of sin(kx) is exactly k_h cos(kx)
    let k_h = (k * s.dx()).sin() / s.dx();
    let exact = |x: f64, y: f64| {
        let (sn, cs, e) = ((k * x).sin(), (k * x).cos(), (-y * y).exp());
        let u = eps * sn * y * e;
        let u_x = eps * k_h * cs * y * e;
        let u_y = eps * sn * (1.0 - 2.0 * y * y) * e;
        let u_yy = eps * sn * (4.0 * y.powi(3) - 6.0 * y) * e;
        let v = -eps * k_h * cs * (1.0 - e) / 2.0;
        let us = libm::erf(y / 2.0);
        let g = (-y * y / 4.0).exp() / PI.sqrt();
        u_yy - (us + u) * u_x - v * (u_y + g)
    };
    let (u1, v0) = (&layers[1].0, &layers[0].1);
    let mut worst = 0.0_f64;
    let mut worst_v = 0.0_f64;
    for j in 0..s.n_x {
        for kk in 1..s.n_y - 1 {
            let (x, y) = (s.x(j), s.y(kk));
            worst = worst.max((u1.get(j, kk) - exact(x, y)).abs());
            worst_v = worst_v.max((v0.get(j, kk) + eps * k_h * (k * x).cos() * (1.0 - (-y * y).exp()) / 2.0).abs());
        }
    }
    assert!(worst < 1e-3 * eps, "layer 1 error {worst:e}");
    assert!(worst_v < 1e-3 * eps, "v_0 error {worst_v:e}");
}

#[test]
fn central_residual_vanishes_on_the_initial_slab() {
    // with k0 = 2 the Taylor polynomial is quadratic in t, so the one-sided
    // second-order d_t at t = 0 is exact and the compatibility recursion
    // cancels the operator there
    let s = GridSpec::new(0.25, 8.0, 1.0, 9, 16, 161).unwrap();
    let sh = shear(&s);
    let z = zeroth_approximation(&default_perturbation(&s, 0.01), &sh, 2).unwrap();
    let r = prandtl_operator(&sh, &z.p0, &z.v0, Scheme::Central).unwrap();
    // the wall and top rows carry boundary conditions, not the equation
    let slab = r
        .plane_data(0)
        .chunks(s.n_y)
        .flat_map(|line| &line[1..s.n_y - 1])
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let later = r.plane_data(s.n_t - 1).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(slab < 1e-12, "{slab:e}");
    assert!(later > 1e3 * slab.max(1e-16));
}

#[test]
fn zeroth_approximation_validates_its_data() {
    let s = GridSpec::new(0.25, 8.0, 1.0, 5, 8, 81).unwrap();
    let sh = shear(&s);
    let off_wall = Plane::from_fn(&s, |_, _| 0.1);
    assert!(matches!(zeroth_approximation(&off_wall, &sh, 1), Err(Error::InvalidArgument(_))));
    let dip = Plane::from_fn(&s, |_, y| -3.0 * y * (-y * y).exp());
    assert!(matches!(zeroth_approximation(&dip, &sh, 1), Err(Error::NonMonotone { .. })));
    assert!(zeroth_approximation(&default_perturbation(&s, 0.01), &sh, 3).is_err());
}

#[test]
fn zero_perturbation_stops_immediately() {
    let s = GridSpec::new(0.25, 8.0, 1.0, 9, 8, 81).unwrap();
    let r = run(&quick_cfg(), &shear(&s), &default_perturbation(&s, 0.0)).unwrap();
    assert_eq!(r.stop, StopReason::Tolerance);
    assert!(r.trace.is_empty());
    assert_eq!(r.zeroth.f_a.max_abs(), 0.0);
}

#[test]
fn steps_satisfy_the_algebraic_identities_and_keep_the_data() {
    let s = GridSpec::new(0.25, 10.0, 1.0, 17, 16, 81).unwrap();
    let u0 = default_perturbation(&s, 0.01);
    let r = run(&quick_cfg(), &shear(&s), &u0).unwrap();
    assert_eq!(r.stop, StopReason::MaxIterations);
    assert_eq!(r.trace.len(), 2);
    for rec in &r.trace {
        assert!(rec.identity_defect < 1e-10, "{rec:?}");
        assert!(rec.telescoping_defect < 1e-10, "{rec:?}");
        assert!(rec.residual_next.is_finite());
    }
    // corrections start from zero, so the initial slab is the data
    let p0 = r.state.p.plane_data(0);
    let gap = p0.iter().zip(&u0.data).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-15, "{gap:e}");
}

#[test]
fn tolerance_stop_records_no_more_steps_than_needed() {
    let s = GridSpec::new(0.25, 10.0, 1.0, 9, 8, 81).unwrap();
    let cfg = IterationConfig { tolerance_residual: 1.0, ..quick_cfg() };
    let r = run(&cfg, &shear(&s), &default_perturbation(&s, 0.01)).unwrap();
    assert_eq!(r.stop, StopReason::Tolerance);
    assert!(r.trace.is_empty());
}

fn divergence_free_pair(s: &GridSpec, phase: f64) -> (Field, Field) {
    let k = 2.0 * PI / s.l_x;
    let u = Field::from_fn(s, |t, x, y| (1.0 + t) * (k * x + phase).sin() * y * (-y * y).exp());
    let v = u.backward_difference(Axis::X).unwrap().cumulative_integral_y().scale(-1.0);
    (u, v)
}

#[test]
fn factored_mollification_error_converges_to_the_four_term_form() {
    let mut gaps = Vec::new();
    for (n_x, n_y) in [(16, 81), (32, 161), (64, 321)] {
        let s = GridSpec::new(0.25, 8.0, 1.0, 5, n_x, n_y).unwrap();
        let (q, r) = divergence_free_pair(&s, 0.0);
        let (du, dv) = divergence_free_pair(&s, 1.0);
        let a = mollification_error(&q, &r, &du, &dv).unwrap();
        let b = mollification_error_factored(&q, &r, &du, &dv).unwrap();
        gaps.push(a.sub(&b).max_abs() / a.max_abs());
    }
    assert!(gaps[1] < 0.75 * gaps[0] && gaps[2] < 0.75 * gaps[1], "{gaps:?}");
}

#[test]
fn stability_of_identical_data_is_zero() {
    let s = GridSpec::new(0.25, 8.0, 1.0, 9, 8, 81).unwrap();
    let sh = shear(&s);
    let z = default_perturbation(&s, 0.0);
    let rep = stability_experiment(&quick_cfg(), &sh, &z, &z).unwrap();
    assert_eq!(rep.ratio, 0.0);
    assert_eq!(rep.data_gap, 0.0);
}

fn record(n: usize, theta: f64, dtheta: f64, w: f64) -> StepRecord {
    StepRecord { n, theta, dtheta, w_norms: vec![w], ..StepRecord::default() }
}

#[test]
fn decay_fit_recovers_a_synthetic_exponent() {
    // w_n = theta_n^{1-k} dtheta_n with k = 3 exactly
    let theta0: f64 = 10.0;
    let trace: Vec<StepRecord> = (0..20)
        .map(|n| {
            let (t, dt) = prandtl_core::mollifier::theta(n, theta0);
            record(n, t, dt, t.powf(-2.0) * dt)
        })
        .collect();
    let fit = fit_decay_exponent(&trace, 0, 0, 1.0 + 1e-9).unwrap();
    assert!((fit.k_eff - 3.0).abs() < 1e-3, "{}", fit.k_eff);
    assert!(fit.normalized.iter().all(|v| (v / fit.normalized[0] - 1.0).abs() < 1e-3));
    assert!(fit_decay_exponent(&trace[..1], 0, 0, 2.0).is_none());
    assert!(fit_decay_exponent(&trace, 3, 0, 2.0).is_none());
}

#[test]
fn config_validation_rejects_bad_values() {
    let ok = IterationConfig::default();
    assert!(ok.validate().is_ok());
    assert!(IterationConfig { epsilon: -1.0, ..ok.clone() }.validate().is_err());
    assert!(IterationConfig { theta0: f64::INFINITY, ..ok.clone() }.validate().is_err());
    assert!(matches!(
        IterationConfig { monitor_orders: vec![(4, 1.0)], ..ok.clone() }.validate(),
        Err(Error::UnsupportedNormOrder { .. })
    ));
    let json = serde_json::to_string(&ok).unwrap();
    let back: IterationConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back.theta0, ok.theta0);
}
