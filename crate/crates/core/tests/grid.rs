use std::f64::consts::PI;

use prandtl_core::experiments::loglog_slope;
use prandtl_core::grid::staggered_divergence;
use prandtl_core::{Axis, Error, Field, GridSpec, Measure};
use proptest::prelude::*;

fn spec() -> GridSpec {
    GridSpec::new(1.0, 4.0, 2.0, 9, 16, 33).unwrap()
}

#[test]
fn spec_rejects_degenerate_lattices() {
    assert!(matches!(GridSpec::new(1.0, 4.0, 1.0, 3, 8, 33), Err(Error::InvalidGrid(_))));
    assert!(matches!(GridSpec::new(1.0, 4.0, 1.0, 8, 8, 7), Err(Error::InvalidGrid(_))));
    assert!(matches!(GridSpec::new(0.0, 4.0, 1.0, 8, 8, 33), Err(Error::InvalidGrid(_))));
    // dy = 1 does not resolve the boundary layer
    assert!(matches!(GridSpec::new(1.0, 8.0, 1.0, 8, 8, 9), Err(Error::InvalidGrid(_))));
}

#[test]
fn spacings_follow_the_periodic_and_closed_conventions() {
    let s = spec();
    assert!((s.dt() - 1.0 / 8.0).abs() < 1e-15);
    assert!((s.dx() - 2.0 / 16.0).abs() < 1e-15);
    assert!((s.dy() - 4.0 / 32.0).abs() < 1e-15);
    assert_eq!(s.idx(1, 2, 3), (16 + 2) * 33 + 3);
}

#[test]
fn derivative_of_constant_vanishes() {
    let f = Field::constant(&spec(), 3.5);
    for axis in [Axis::T, Axis::X, Axis::Y] {
        for order in 1..=2 {
            assert!(f.derivative(axis, order).unwrap().max_abs() < 1e-12);
        }
    }
}

#[test]
fn second_derivative_is_exact_on_quadratics_including_boundaries() {
    let f = Field::from_fn(&spec(), |_, _, y| y * y);
    let d2 = f.derivative(Axis::Y, 2).unwrap();
    assert!(d2.data().iter().all(|v| (v - 2.0).abs() < 1e-10));
    let g = Field::from_fn(&spec(), |t, _, _| 3.0 * t * t - t);
    let dt = g.derivative(Axis::T, 1).unwrap();
    let s = spec();
    for i in 0..s.n_t {
        assert!((dt.get(i, 0, 0) - (6.0 * s.t(i) - 1.0)).abs() < 1e-10);
    }
}

#[test]
fn periodic_first_derivative_converges_at_second_order() {
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for n_x in [32, 64, 128] {
        let s = GridSpec::new(1.0, 4.0, 1.0, 4, n_x, 9).unwrap();
        let f = Field::from_fn(&s, |_, x, _| (2.0 * PI * x).sin());
        let exact = Field::from_fn(&s, |_, x, _| 2.0 * PI * (2.0 * PI * x).cos());
        hs.push(s.dx());
        errs.push(f.derivative(Axis::X, 1).unwrap().sub(&exact).max_abs());
    }
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((r - 4.0).abs() < 0.2, "ratio {r}");
    }
    assert!((loglog_slope(&hs, &errs) - 2.0).abs() < 0.05);
}

#[test]
fn unsupported_orders_are_rejected() {
    let f = Field::zeros(&spec());
    assert!(matches!(f.derivative(Axis::Y, 3), Err(Error::UnsupportedOrder(3))));
    assert!(matches!(f.derivative(Axis::T, 0), Err(Error::UnsupportedOrder(0))));
}

#[test]
fn cumulative_integral_examples() {
    let s = spec();
    let one = Field::constant(&s, 1.0).cumulative_integral_y();
    let lin = Field::from_fn(&s, |_, _, y| 2.0 * y).cumulative_integral_y();
    for k in 0..s.n_y {
        let y = s.y(k);
        assert!((one.get(2, 3, k) - y).abs() < 1e-12);
        // trapezoid on a linear integrand is exact
        assert!((lin.get(2, 3, k) - y * y).abs() < 1e-10);
    }
    assert!(Field::zeros(&s).cumulative_integral_y().max_abs() == 0.0);
    assert!(lin.plane_data(4).iter().step_by(s.n_y).all(|v| *v == 0.0));
}

#[test]
fn domain_integrals() {
    let s = GridSpec::new(1.0, 8.0, 2.0 * PI, 5, 8, 256).unwrap();
    let vol = Field::constant(&s, 1.0).integral(Measure::Txy);
    assert!((vol - 8.0 * 2.0 * PI).abs() < 1e-10);
    let f = Field::from_fn(&s, |_, _, y| (-y).exp());
    let exact = 2.0 * PI * (1.0 - (-8.0_f64).exp());
    assert!((f.integral(Measure::Txy) - exact).abs() / exact < 1e-4);
    assert_eq!(Field::zeros(&s).integral(Measure::Txy), 0.0);
}

#[test]
fn integrate_then_differentiate_recovers_the_integrand() {
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for n_y in [65, 129, 257] {
        let s = GridSpec::new(1.0, 4.0, 1.0, 4, 4, n_y).unwrap();
        let f = Field::from_fn(&s, |_, _, y| (2.0 * y).cos() * (-0.3 * y).exp());
        let back = f.cumulative_integral_y().derivative(Axis::Y, 1).unwrap();
        let mut worst = 0.0_f64;
        for k in 1..n_y - 1 {
            worst = worst.max((back.get(1, 1, k) - f.get(1, 1, k)).abs());
        }
        hs.push(s.dy());
        errs.push(worst);
    }
    assert!(loglog_slope(&hs, &errs) >= 1.8, "{errs:?}");
}

#[test]
fn antiderivative_of_dx_is_staggered_divergence_free() {
    let s = spec();
    let u = Field::from_fn(&s, |t, x, y| (1.0 + t) * (PI * x).sin() * y * (-y).exp());
    let v = u.derivative(Axis::X, 1).unwrap().cumulative_integral_y().scale(-1.0);
    assert!(staggered_divergence(&u, &v).unwrap().max_abs() < 1e-12);
}

#[test]
fn csv_round_trip_preserves_samples_and_spec() {
    let s = spec();
    let f = Field::from_fn(&s, |t, x, y| t.sin() + x * y / 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    f.write_csv(&path).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("t,x,y,value"));
    let g = Field::read_csv(&path).unwrap();
    assert_eq!(g.spec(), f.spec());
    assert_eq!(g.data(), f.data());
}

#[test]
fn wall_flag_zeroes_the_wall_row() {
    let s = spec();
    let f = Field::from_fn(&s, |_, _, y| 1.0 + y).enforce_wall_zero();
    assert!(f.meta().vanishes_at_wall);
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            assert_eq!(f.get(i, j, 0), 0.0);
        }
    }
}

fn small_field() -> impl Strategy<Value = Field> {
    prop::collection::vec(-1.0..1.0_f64, 4 * 4 * 9).prop_map(|d| {
        let s = GridSpec::new(1.0, 2.0, 1.0, 4, 4, 9).unwrap();
        Field::from_vec(&s, d).unwrap()
    })
}

proptest! {
    #[test]
    fn derivative_is_linear(f in small_field(), g in small_field(), a in -3.0..3.0_f64, b in -3.0..3.0_f64) {
        for axis in [Axis::T, Axis::X, Axis::Y] {
            let lhs = Field::linear_combination(a, &f, b, &g).derivative(axis, 1).unwrap();
            let rhs = Field::linear_combination(a, &f.derivative(axis, 1).unwrap(), b, &g.derivative(axis, 1).unwrap());
            prop_assert!(lhs.sub(&rhs).max_abs() < 1e-11);
        }
    }

    #[test]
    fn operations_leave_inputs_untouched(f in small_field()) {
        let before = f.data().to_vec();
        let _ = f.derivative(Axis::Y, 2).unwrap();
        let _ = f.cumulative_integral_y();
        let _ = f.scale(2.0).add(&f);
        prop_assert_eq!(before, f.data().to_vec());
    }
}
