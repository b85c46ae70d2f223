//! Smoothing operators `S_theta`.
//!
//! `S_theta f` convolves `f` with `rho_theta(s) = theta rho(theta s)` along
//! each axis, where `rho` is the standard bump supported in `[-1, 1]`. In `t`
//! and `y` the kernel is shifted by `+1/theta`, so the output at `(t, y)` only
//! reads samples from `[t, t + 2/theta] x [y, y + 2/theta]` and never needs
//! data below `t = 0` or `y = 0`. Beyond `y = Y` the field is extended by zero;
//! beyond `t = T` it is extended by its value at `T`. In `x` the convolution
//! is periodic and symmetric.
//!
//! Discrete weights are the exact integrals of the kernel over each lattice
//! cell, renormalized to unit sum, so constants are reproduced away from `Y`
//! and the operator tends to the identity once the kernel is narrower than a
//! cell.

use std::sync::atomic::{AtomicBool, Ordering};

use log::{log, Level};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Axis, Field};
use crate::quadrature::CompositeRule;
use crate::shear_flow::ShearFlow;

/// `rho(s) = c exp(-1/(1 - s^2))` on `|s| < 1`, normalized to unit mass.
#[derive(Debug, Clone)]
pub struct BumpKernel {
    c: f64,
    rule: CompositeRule,
}

fn bump_shape(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

impl Default for BumpKernel {
    fn default() -> Self {
        Self::new()
    }
}

impl BumpKernel {
    pub fn new() -> Self {
        let rule = CompositeRule::new(0.0, 1.0, 64, 8);
        let mass = CompositeRule::new(-1.0, 1.0, 128, 8).integrate(bump_shape);
        BumpKernel { c: 1.0 / mass, rule }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.c * bump_shape(s)
    }

    /// `int_{-1}^{u} rho`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        // Map the fixed rule on [0, 1] onto [-1, u].
        let len = u + 1.0;
        len * self.rule.integrate(|r| self.eval(-1.0 + len * r))
    }

    /// Cell-averaged weights for a symmetric kernel of radius `1/theta` on a
    /// lattice of spacing `h`; index `o + m` holds offset `o`, `|o| <= m`.
    fn symmetric_weights(&self, theta: f64, h: f64) -> (usize, Vec<f64>) {
        let m = ((1.0 / theta) / h + 0.5).ceil() as usize;
        let mut w: Vec<f64> = (-(m as isize)..=m as isize)
            .map(|o| {
                let (a, b) = ((o as f64 - 0.5) * h, (o as f64 + 0.5) * h);
                self.cdf(theta * b) - self.cdf(theta * a)
            })
            .collect();
        normalize(&mut w);
        (m, w)
    }

    /// Weights for the shifted kernel: offset `o >= 0` collects
    /// `int rho_theta(1/theta - s) ds` over the cell around `o h`.
    fn shifted_weights(&self, theta: f64, h: f64) -> Vec<f64> {
        let m = ((2.0 / theta) / h + 0.5).ceil() as usize;
        let mut w: Vec<f64> = (0..=m)
            .map(|o| {
                let a = ((o as f64 - 0.5) * h).max(0.0);
                let b = (o as f64 + 0.5) * h;
                self.cdf(1.0 - theta * a) - self.cdf(1.0 - theta * b)
            })
            .collect();
        normalize(&mut w);
        while w.len() > 1 && *w.last().unwrap() == 0.0 {
            w.pop();
        }
        w
    }
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= s;
    }
}

/// `theta_n = sqrt(theta_0^2 + n)` and `Delta theta_n = theta_{n+1} - theta_n`.
pub fn theta(n: usize, theta0: f64) -> (f64, f64) {
    let t = (theta0 * theta0 + n as f64).sqrt();
    let t1 = (theta0 * theta0 + n as f64 + 1.0).sqrt();
    // 1/(t1 + t) avoids cancellation in t1 - t.
    (t, 1.0 / (t1 + t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSchedule {
    pub theta0: f64,
}

impl ThetaSchedule {
    pub fn new(theta0: f64) -> Result<Self> {
        if !(theta0 >= 4.0) || !theta0.is_finite() {
            return Err(Error::InvalidArgument(format!("theta_0 = {theta0} must be >= 4")));
        }
        Ok(ThetaSchedule { theta0 })
    }

    pub fn theta(&self, n: usize) -> f64 {
        theta(n, self.theta0).0
    }

    pub fn delta(&self, n: usize) -> f64 {
        theta(n, self.theta0).1
    }
}

static UNDER_RESOLVED: AtomicBool = AtomicBool::new(false);

/// The smoothing operator family `S_theta` on one lattice.
#[derive(Debug, Clone, Default)]
pub struct Mollifier {
    kernel: BumpKernel,
}

impl Mollifier {
    pub fn new() -> Self {
        Mollifier { kernel: BumpKernel::new() }
    }

    pub fn kernel(&self) -> &BumpKernel {
        &self.kernel
    }

    /// `S_theta f`.
    pub fn smooth(&self, f: &Field, theta: f64) -> Field {
        assert!(theta > 0.0, "theta must be positive");
        let s = *f.spec();
        for axis in [Axis::T, Axis::X, Axis::Y] {
            if 1.0 / theta < 2.0 * s.spacing(axis) {
                // Loud once per process; experiments sweep theta thousands of times.
                let level = if UNDER_RESOLVED.swap(true, Ordering::Relaxed) { Level::Debug } else { Level::Warn };
                log!(
                    level,
                    "S_theta under-resolved along {axis:?}: 1/theta = {:.3e} < 2 h = {:.3e}",
                    1.0 / theta,
                    2.0 * s.spacing(axis)
                );
            }
        }
        let g = self.convolve_t(f, theta);
        let g = self.convolve_x(&g, theta);
        self.convolve_y(&g, theta)
    }

    fn convolve_t(&self, f: &Field, theta: f64) -> Field {
        let s = *f.spec();
        let w = self.kernel.shifted_weights(theta, s.dt());
        let mut out = Field::zeros(&s);
        let p = s.plane_len();
        out.data_mut().par_chunks_mut(p).enumerate().for_each(|(i, dst)| {
            for (o, &wo) in w.iter().enumerate() {
                let src = f.plane_data((i + o).min(s.n_t - 1));
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += wo * v;
                }
            }
        });
        out
    }

    fn convolve_x(&self, f: &Field, theta: f64) -> Field {
        let s = *f.spec();
        let (m, w) = self.kernel.symmetric_weights(theta, s.dx());
        let mut out = Field::zeros(&s);
        let (nx, ny) = (s.n_x, s.n_y);
        out.data_mut().par_chunks_mut(s.plane_len()).enumerate().for_each(|(i, dst)| {
            let src = f.plane_data(i);
            for j in 0..nx {
                let row = &mut dst[j * ny..(j + 1) * ny];
                for (idx, &wo) in w.iter().enumerate() {
                    let o = idx as isize - m as isize;
                    let jj = (j as isize + o).rem_euclid(nx as isize) as usize;
                    for (d, &v) in row.iter_mut().zip(&src[jj * ny..(jj + 1) * ny]) {
                        *d += wo * v;
                    }
                }
            }
        });
        out
    }

    fn convolve_y(&self, f: &Field, theta: f64) -> Field {
        let s = *f.spec();
        let w = self.kernel.shifted_weights(theta, s.dy());
        let mut out = Field::zeros(&s);
        out.data_mut().par_chunks_mut(s.n_y).zip(f.data().par_chunks(s.n_y)).for_each(|(dst, src)| {
            let n = src.len();
            for (k, d) in dst.iter_mut().enumerate() {
                *d = w.iter().enumerate().take(n - k).map(|(o, wo)| wo * src[k + o]).sum();
            }
        });
        out
    }

    /// `(S_{theta_n} - S_{theta_{n-1}}) f`.
    pub fn smooth_difference(&self, f: &Field, n: usize, theta0: f64) -> Result<Field> {
        if n == 0 {
            return Err(Error::InvalidArgument("smooth_difference needs n >= 1".into()));
        }
        let (a, _) = theta(n, theta0);
        let (b, _) = theta(n - 1, theta0);
        Ok(self.smooth(f, a).sub(&self.smooth(f, b)))
    }

    /// Commutators of `S_theta` with division by `d_y u^s`:
    ///
    /// * `C1`: `(1/g) S(d_y f) - S(d_y f / g)`;
    /// * `C2`: `d_y[(1/g) d_y S f - d_y S(f / g)]`,
    ///
    /// with `g = d_y u^s`.
    pub fn commutator(&self, f: &Field, shear: &ShearFlow, theta: f64, variant: Commutator) -> Result<Field> {
        let g = &shear.d_y_u_s;
        let (i, j, k, v) = g.argmin();
        if !(v > 0.0) {
            let s = g.spec();
            return Err(Error::NonMonotone { t: s.t(i), x: s.x(j), y: s.y(k), value: v });
        }
        match variant {
            Commutator::C1 => {
                let fy = f.derivative(Axis::Y, 1)?;
                Ok(self.smooth(&fy, theta).div(g).sub(&self.smooth(&fy.div(g), theta)))
            }
            Commutator::C2 => {
                let a = self.smooth(f, theta).derivative(Axis::Y, 1)?.div(g);
                let b = self.smooth(&f.div(g), theta).derivative(Axis::Y, 1)?;
                a.sub(&b).derivative(Axis::Y, 1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Commutator {
    C1,
    C2,
}

/// `sum_{p=0}^{j-1} theta_p^e Delta theta_p`.
pub fn delta_theta_sum(theta0: f64, j: usize, exponent: i32) -> f64 {
    (0..j)
        .map(|p| {
            let (t, dt) = theta(p, theta0);
            t.powi(exponent) * dt
        })
        .sum()
}

/// Smallest constant making the two-regime sum inequality hold for
/// `j = 1..=j_max`: for `e >= 0` the bound is `C theta_j^{e+1}`, for
/// `e <= -2` it is `C`.
pub fn delta_theta_sum_constant(theta0: f64, j_max: usize, exponent: i32) -> f64 {
    assert!(exponent >= 0 || exponent <= -2, "the inequality has no regime at exponent -1");
    let mut worst = 0.0_f64;
    let mut acc = 0.0;
    for j in 1..=j_max {
        let (t, dt) = theta(j - 1, theta0);
        acc += t.powi(exponent) * dt;
        let bound = if exponent >= 0 { theta(j, theta0).0.powi(exponent + 1) } else { 1.0 };
        worst = worst.max(acc / bound);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn kernel_has_unit_mass_and_support() {
        let k = BumpKernel::new();
        assert!((k.cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((k.cdf(0.999_999) - 1.0).abs() < 1e-12);
        assert!((k.cdf(0.0) - 0.5).abs() < 1e-13);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(-1.5), 0.0);
    }

    #[test]
    fn shifted_weights_cover_twice_the_radius() {
        let k = BumpKernel::new();
        let w = k.shifted_weights(10.0, 0.01);
        // support [0, 0.2] -> 21 cells, the central one near offset 10
        assert!(w.len() <= 22);
        let peak = w.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
        assert_eq!(peak, 10);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn narrow_kernel_is_identity() {
        let spec = GridSpec::new(1.0, 4.0, 1.0, 5, 8, 9).unwrap();
        let f = Field::from_fn(&spec, |t, x, y| t + (6.0 * x).sin() + y);
        let g = Mollifier::new().smooth(&f, 1e6);
        assert!(g.sub(&f).max_abs() < 1e-12);
    }

    #[test]
    fn theta_schedule_values() {
        let (t, d) = theta(0, 10.0);
        assert_eq!(t, 10.0);
        assert!((d - (101f64.sqrt() - 10.0)).abs() < 1e-15);
        assert_eq!(theta(21, 10.0).0, 11.0);
        assert!(ThetaSchedule::new(3.0).is_err());
    }
}
