use prandtl_core::mollifier::{delta_theta_sum, delta_theta_sum_constant, theta, Mollifier, ThetaSchedule};
use prandtl_core::{Axis, Field, GridSpec};
use proptest::prelude::*;

fn spec() -> GridSpec {
    GridSpec::new(1.0, 4.0, 1.0, 33, 32, 129).unwrap()
}

fn smooth_field(s: &GridSpec) -> Field {
    let w = 2.0 * std::f64::consts::PI / s.l_x;
    Field::from_fn(s, |t, x, y| (1.0 + t * t) * (1.0 + 0.5 * (w * x).sin()) * (-0.5 * y).exp())
}

/// Max abs over nodes with `y <= y_cut`.
fn max_below(f: &Field, y_cut: f64) -> f64 {
    let s = f.spec();
    let mut m = 0.0_f64;
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            for (k, v) in f.line(i, j).iter().enumerate() {
                if s.y(k) <= y_cut {
                    m = m.max(v.abs());
                }
            }
        }
    }
    m
}

#[test]
fn zero_maps_to_zero() {
    let f = Field::zeros(&spec());
    assert_eq!(Mollifier::new().smooth(&f, 8.0).max_abs(), 0.0);
}

#[test]
fn theta_schedule_examples() {
    assert_eq!(theta(0, 10.0).0, 10.0);
    assert!((theta(44, 10.0).0 - 144f64.sqrt()).abs() < 1e-14);
    let s = ThetaSchedule::new(16.0).unwrap();
    assert!((s.theta(1) - s.theta(0) - s.delta(0)).abs() < 1e-14);
    assert!(ThetaSchedule::new(f64::NAN).is_err());
}

#[test]
fn constants_are_reproduced_away_from_the_top() {
    let s = spec();
    let f = Field::constant(&s, 2.5);
    let theta = 8.0;
    let g = Mollifier::new().smooth(&f, theta).sub(&f);
    // the kernel reads zero beyond Y, so only nodes with y + 2/theta <= Y reproduce
    assert!(max_below(&g, s.y_max - 2.0 / theta) < 1e-13);
}

#[test]
fn positivity_and_sup_contraction() {
    let s = spec();
    let f = Field::from_fn(&s, |t, x, y| ((5.0 * x + t).sin() * (3.0 * y).cos()).abs());
    let g = Mollifier::new().smooth(&f, 10.0);
    assert!(g.data().iter().all(|v| *v >= -1e-15));
    let h = Field::from_fn(&s, |t, x, y| (5.0 * x - t).sin() * (3.0 * y).cos());
    assert!(Mollifier::new().smooth(&h, 10.0).max_abs() <= h.max_abs() + 1e-14);
}

#[test]
fn commutes_with_the_periodic_derivative() {
    let s = spec();
    let f = smooth_field(&s);
    let m = Mollifier::new();
    let a = m.smooth(&f.derivative(Axis::X, 1).unwrap(), 12.0);
    let b = m.smooth(&f, 12.0).derivative(Axis::X, 1).unwrap();
    assert!(a.sub(&b).max_abs() < 1e-12);
}

#[test]
fn differences_telescope() {
    let s = spec();
    let f = smooth_field(&s);
    let m = Mollifier::new();
    let theta0 = 8.0;
    let mut acc = Field::zeros(&s);
    for n in 1..=6 {
        acc = acc.add(&m.smooth_difference(&f, n, theta0).unwrap());
    }
    let direct = m.smooth(&f, theta(6, theta0).0).sub(&m.smooth(&f, theta0));
    assert!(acc.sub(&direct).max_abs() < 1e-13);
    assert!(m.smooth_difference(&f, 0, theta0).is_err());
}

#[test]
fn delta_theta_sums() {
    // e = 0 telescopes exactly
    let theta0 = 10.0;
    assert!((delta_theta_sum(theta0, 50, 0) - (theta(50, theta0).0 - theta0)).abs() < 1e-12);
    for e in [-3, -2, 0, 1, 2] {
        let c = delta_theta_sum_constant(theta0, 400, e);
        assert!(c.is_finite() && c <= 2.0, "e = {e}: {c}");
    }
}

#[test]
fn approximation_error_halves_when_theta_doubles() {
    // the shifted kernels have a first moment, so I - S_theta is first order
    let s = GridSpec::new(1.0, 4.0, 1.0, 65, 32, 257).unwrap();
    let f = smooth_field(&s);
    let m = Mollifier::new();
    let cut = s.y_max - 0.5;
    let e16 = max_below(&m.smooth(&f, 16.0).sub(&f), cut);
    let e32 = max_below(&m.smooth(&f, 32.0).sub(&f), cut);
    let r = e16 / e32;
    assert!((1.7..2.3).contains(&r), "{e16} / {e32} = {r}");
}

fn small_field() -> impl Strategy<Value = Field> {
    prop::collection::vec(-1.0..1.0_f64, 9 * 8 * 17).prop_map(|d| {
        let s = GridSpec::new(1.0, 4.0, 1.0, 9, 8, 17).unwrap();
        Field::from_vec(&s, d).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoothing_is_linear(f in small_field(), g in small_field(), a in -2.0..2.0_f64) {
        let m = Mollifier::new();
        let lhs = m.smooth(&Field::linear_combination(a, &f, 1.0, &g), 4.0);
        let rhs = Field::linear_combination(a, &m.smooth(&f, 4.0), 1.0, &m.smooth(&g, 4.0));
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn smoothing_contracts_the_sup(f in small_field()) {
        prop_assert!(Mollifier::new().smooth(&f, 4.0).max_abs() <= f.max_abs() + 1e-14);
    }
}
