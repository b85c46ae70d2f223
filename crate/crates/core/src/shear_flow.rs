//! Monotone shear flows `u^s(t, y)`: solutions of the heat equation on the
//! half-line with `u^s(t, 0) = 0`, `u^s -> 1` at infinity, evaluated through
//! the odd-reflection heat kernel.
//!
//! Normal derivatives are obtained from the same kernel applied to the
//! profile's derivatives, so `d_y u^s`, `d_y^2 u^s`, ... carry quadrature
//! error only. For profiles whose even derivatives do not vanish at the wall
//! the reflected data has jumps; their delta contributions are added in
//! closed form.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Field, GridSpec};
use crate::quadrature::CompositeRule;

/// Highest normal derivative order a profile must supply.
pub const MAX_PROFILE_DERIVATIVE: usize = 4;

/// Truncation of the Gaussian variable `xi` in the kernel integrals.
const XI_MAX: f64 = 8.0;

type ProfileFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Initial shear profile `u_0^s(y)` together with its derivatives.
#[derive(Clone)]
pub enum ShearProfile {
    /// `erf(y / (2 * width))`; `width = 1` is the canonical profile whose heat
    /// evolution is `erf(y / (2 sqrt(1 + t)))`.
    Erf { width: f64 },
    /// `1 - exp(-a y)`. Its second derivative does not vanish at the wall, so
    /// the heat solution is not smooth at `t = 0, y = 0`.
    ExpSaturating { a: f64 },
    /// User-supplied profile; `eval(p, y)` returns `d^p u_0^s / dy^p` for
    /// `p <= 4`.
    Custom { name: String, eval: ProfileFn },
}

impl fmt::Debug for ShearProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShearProfile::Erf { width } => f.debug_struct("Erf").field("width", width).finish(),
            ShearProfile::ExpSaturating { a } => f.debug_struct("ExpSaturating").field("a", a).finish(),
            ShearProfile::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish_non_exhaustive(),
        }
    }
}

impl ShearProfile {
    pub fn erf_canonical() -> Self {
        ShearProfile::Erf { width: 1.0 }
    }

    pub fn name(&self) -> &str {
        match self {
            ShearProfile::Erf { .. } => "erf_canonical",
            ShearProfile::ExpSaturating { .. } => "exp_saturating",
            ShearProfile::Custom { name, .. } => name,
        }
    }

    /// `d^p u_0^s / dy^p` at `y >= 0`.
    pub fn derivative(&self, p: usize, y: f64) -> f64 {
        assert!(p <= MAX_PROFILE_DERIVATIVE, "profile derivatives are supplied up to order 4");
        match self {
            ShearProfile::Erf { width } => {
                let s = y / width;
                if p == 0 {
                    return libm::erf(s / 2.0);
                }
                // d/ds erf(s/2) = e^{-s^2/4}/sqrt(pi), then polynomial factors.
                let g = (-s * s / 4.0).exp() / PI.sqrt();
                let poly = match p {
                    1 => 1.0,
                    2 => -s / 2.0,
                    3 => s * s / 4.0 - 0.5,
                    _ => 0.75 * s - s * s * s / 8.0,
                };
                poly * g / width.powi(p as i32)
            }
            ShearProfile::ExpSaturating { a } => {
                let e = (-a * y).exp();
                match p {
                    0 => 1.0 - e,
                    _ => -(-a).powi(p as i32) * e,
                }
            }
            ShearProfile::Custom { eval, .. } => eval(p, y),
        }
    }

    /// Check the standing assumptions on a lattice `0 = y_0 < ... < y_max`.
    /// Monotonicity and the wall value are hard requirements; even-derivative
    /// compatibility is reported.
    pub fn validate(&self, spec: &GridSpec) -> Result<ProfileReport> {
        let u0 = self.derivative(0, 0.0);
        if u0.abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "profile {} does not vanish at the wall (u_0^s(0) = {u0:e})",
                self.name()
            )));
        }
        for k in 0..spec.n_y {
            let y = spec.y(k);
            let d = self.derivative(1, y);
            if !(d > 0.0) {
                return Err(Error::NonMonotone { t: 0.0, x: 0.0, y, value: d });
            }
        }
        let far_field_gap = (self.derivative(0, spec.y_max) - 1.0).abs();
        let even_at_wall = [self.derivative(2, 0.0), self.derivative(4, 0.0)];
        let compatible = even_at_wall.iter().all(|v| v.abs() < 1e-10);
        Ok(ProfileReport { far_field_gap, even_at_wall, compatible })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProfileReport {
    /// `|u_0^s(Y) - 1|`.
    pub far_field_gap: f64,
    /// `d^2 u_0^s(0)` and `d^4 u_0^s(0)`.
    pub even_at_wall: [f64; 2],
    pub compatible: bool,
}

/// `d^j/dy^j` of the heat kernel `G(t, y) = exp(-y^2/4t)/sqrt(4 pi t)`, `j <= 3`.
fn heat_kernel_derivative(j: usize, t: f64, y: f64) -> f64 {
    let g = (-y * y / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
    let poly = match j {
        0 => 1.0,
        1 => -y / (2.0 * t),
        2 => y * y / (4.0 * t * t) - 1.0 / (2.0 * t),
        3 => -y * y * y / (8.0 * t * t * t) + 3.0 * y / (4.0 * t * t),
        _ => unreachable!("kernel derivatives are needed up to order 3"),
    };
    poly * g
}

/// Kernel evaluator: composite Gauss–Legendre on `|xi| <= 8`.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    panels: usize,
    order: usize,
}

impl Default for HeatKernel {
    fn default() -> Self {
        HeatKernel { panels: 32, order: 8 }
    }
}

impl HeatKernel {
    pub fn new(panels: usize, order: usize) -> Self {
        HeatKernel { panels: panels.max(1), order: order.max(1) }
    }

    pub fn nodes(&self) -> usize {
        self.panels * self.order
    }

    fn tail(&self, lo: f64, f: impl Fn(f64) -> f64) -> f64 {
        let lo = lo.max(-XI_MAX);
        if lo >= XI_MAX {
            return 0.0;
        }
        CompositeRule::new(lo, XI_MAX, self.panels, self.order).integrate(|xi| (-xi * xi).exp() * f(xi))
    }

    /// `d_y^p u^s(t, y)` for the heat flow started from `profile`.
    pub fn evaluate(&self, profile: &ShearProfile, p: usize, t: f64, y: f64) -> f64 {
        if t <= 0.0 {
            return profile.derivative(p, y);
        }
        let st = 2.0 * t.sqrt();
        let a = y / st;
        let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
        let plus = self.tail(-a, |xi| profile.derivative(p, st * xi + y));
        let minus = self.tail(a, |xi| profile.derivative(p, (st * xi - y).max(0.0)));
        let mut value = (plus + sign * minus) / PI.sqrt();
        // Jumps of the even derivatives of the odd extension at the wall.
        for m in (2..p).step_by(2) {
            let jump = profile.derivative(m, 0.0);
            if jump != 0.0 {
                value += 2.0 * jump * heat_kernel_derivative(p - 1 - m, t, y);
            }
        }
        value
    }
}

/// The shear flow sampled on a lattice.
#[derive(Debug, Clone)]
pub struct ShearFlow {
    spec: GridSpec,
    profile: ShearProfile,
    kernel: HeatKernel,
    report: ProfileReport,
    /// `(t, y)` tables of `d_y^p u^s`, `p = 0..=4`, `y` fastest.
    tables: Vec<Vec<f64>>,
    pub u_s: Field,
    pub d_y_u_s: Field,
    pub d2_y_u_s: Field,
    pub d3_y_u_s: Field,
    pub alpha: Field,
}

impl ShearFlow {
    /// Evaluate the shear flow and its normal derivatives at every `(t, y)`
    /// node through the kernel representation.
    pub fn solve_heat_kernel(profile: ShearProfile, spec: &GridSpec) -> Result<Self> {
        Self::with_kernel(profile, spec, HeatKernel::default())
    }

    pub fn with_kernel(profile: ShearProfile, spec: &GridSpec, kernel: HeatKernel) -> Result<Self> {
        spec.validate()?;
        let report = profile.validate(spec)?;
        let s = *spec;
        let tables: Vec<Vec<f64>> = (0..=MAX_PROFILE_DERIVATIVE)
            .map(|p| {
                let mut table = vec![0.0; s.n_t * s.n_y];
                table.par_chunks_mut(s.n_y).enumerate().for_each(|(i, row)| {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = kernel.evaluate(&profile, p, s.t(i), s.y(k));
                    }
                });
                table
            })
            .collect();
        if tables.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("heat-kernel quadrature"));
        }
        for i in 0..s.n_t {
            for k in 0..s.n_y {
                let d = tables[1][i * s.n_y + k];
                if !(d > 0.0) {
                    return Err(Error::NonMonotone { t: s.t(i), x: 0.0, y: s.y(k), value: d });
                }
            }
        }
        let alpha_table: Vec<f64> = tables[2].iter().zip(&tables[1]).map(|(a, b)| a / b).collect();
        Ok(ShearFlow {
            spec: s,
            u_s: Field::broadcast_ty(&s, &tables[0]),
            d_y_u_s: Field::broadcast_ty(&s, &tables[1]),
            d2_y_u_s: Field::broadcast_ty(&s, &tables[2]),
            d3_y_u_s: Field::broadcast_ty(&s, &tables[3]),
            alpha: Field::broadcast_ty(&s, &alpha_table),
            profile,
            kernel,
            report,
            tables,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn profile(&self) -> &ShearProfile {
        &self.profile
    }

    pub fn profile_report(&self) -> ProfileReport {
        self.report
    }

    /// `d_y^p u^s` at an arbitrary point (kernel evaluation, not the table).
    pub fn eval(&self, p: usize, t: f64, y: f64) -> f64 {
        self.kernel.evaluate(&self.profile, p, t, y)
    }

    /// `d_y^p u^s` at lattice node `(t_i, y_k)`.
    #[inline]
    pub fn at(&self, p: usize, i: usize, k: usize) -> f64 {
        self.tables[p][i * self.spec.n_y + k]
    }

    /// Normal line of `d_y^p u^s` at time level `i`.
    pub fn row(&self, p: usize, i: usize) -> &[f64] {
        let n = self.spec.n_y;
        &self.tables[p][i * n..(i + 1) * n]
    }

    /// `d_y^p u^s` as a full field, `p <= 4`.
    pub fn derivative_field(&self, p: usize) -> Field {
        match p {
            0 => self.u_s.clone(),
            1 => self.d_y_u_s.clone(),
            2 => self.d2_y_u_s.clone(),
            3 => self.d3_y_u_s.clone(),
            _ => Field::broadcast_ty(&self.spec, &self.tables[p]),
        }
    }

    pub fn min_dy(&self) -> f64 {
        self.tables[1].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `||d_t u^s - d_y^2 u^s||_{L^2}` of the kernel solution itself: `d_y^2`
    /// from the kernel derivative formula, `d_t` from a fine difference
    /// (`h = 1e-4`) of kernel evaluations off the lattice. This measures the
    /// quadrature, not the lattice; see [`ShearFlow::heat_residual_fd`].
    pub fn heat_residual(&self) -> Result<f64> {
        const H: f64 = 1e-4;
        let s = self.spec;
        let k = &self.kernel;
        let u = |t: f64, y: f64| k.evaluate(&self.profile, 0, t, y);
        let acc: f64 = (0..s.n_t)
            .into_par_iter()
            .map(|i| {
                let t = s.t(i);
                let mut row = 0.0;
                for kk in 0..s.n_y {
                    let y = s.y(kk);
                    let ut = if t >= 2.0 * H {
                        (u(t + H, y) - u(t - H, y)) / (2.0 * H)
                    } else {
                        (-3.0 * u(t, y) + 4.0 * u(t + H, y) - u(t + 2.0 * H, y)) / (2.0 * H)
                    };
                    let r = ut - self.at(2, i, kk);
                    row += s.weight_y(kk) * r * r;
                }
                s.weight_t(i) * row
            })
            .sum();
        Ok((acc * s.l_x).sqrt())
    }

    /// `||d_t u^s - d_y^2 u^s||_{L^2}` with both derivatives taken by finite
    /// differences of the sampled `u^s`; second order under refinement.
    pub fn heat_residual_fd(&self) -> Result<f64> {
        let ut = self.u_s.derivative(Axis::T, 1)?;
        let uyy = self.u_s.derivative(Axis::Y, 2)?;
        Ok(ut.sub(&uyy).map(|v| v * v).integral_txy().sqrt())
    }

    /// Residual of the Burgers equation for `alpha`.
    pub fn burgers_residual(&self) -> Result<f64> {
        burgers_residual_of(&self.alpha)
    }

    /// Shift-ratio diagnostics of `d_y u^s`; see [`shift_ratios`].
    pub fn shift_ratio_diagnostics(&self, y_bar: f64, t_bar: f64, r0: f64) -> Result<(f64, f64)> {
        shift_ratios(&self.d_y_u_s, y_bar, t_bar, r0)
    }

    pub fn diagnostics(&self) -> Result<ShearDiagnostics> {
        let r0 = 0.5 * self.spec.t_final;
        let (ry, rt) = self.shift_ratio_diagnostics(1.0_f64.min(r0), 0.25 * r0, r0)?;
        Ok(ShearDiagnostics {
            profile: self.profile.name().to_string(),
            heat_residual: self.heat_residual()?,
            heat_residual_fd: self.heat_residual_fd()?,
            min_dy: self.min_dy(),
            burgers_residual: self.burgers_residual()?,
            shift_ratios: [ry, rt],
            compatible: self.report.compatible,
            far_field_gap: self.report.far_field_gap,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShearDiagnostics {
    pub profile: String,
    pub heat_residual: f64,
    pub heat_residual_fd: f64,
    pub min_dy: f64,
    pub burgers_residual: f64,
    pub shift_ratios: [f64; 2],
    pub compatible: bool,
    pub far_field_gap: f64,
}

/// `||d_t a - d_y^2 a - 2 a d_y a||_{L^2}` over interior nodes (the first and
/// last rows in `t` and `y` are excluded).
pub fn burgers_residual_of(alpha: &Field) -> Result<f64> {
    let s = *alpha.spec();
    let at = alpha.derivative(Axis::T, 1)?;
    let ay = alpha.derivative(Axis::Y, 1)?;
    let ayy = alpha.derivative(Axis::Y, 2)?;
    let mut acc = 0.0;
    for i in 1..s.n_t - 1 {
        for j in 0..s.n_x {
            for k in 1..s.n_y - 1 {
                let r = at.get(i, j, k) - ayy.get(i, j, k) - 2.0 * alpha.get(i, j, k) * ay.get(i, j, k);
                acc += s.weight_t(i) * s.weight_y(k) * r * r;
            }
        }
    }
    Ok((acc * s.dx()).sqrt())
}

fn lerp_line(line: &[f64], h: f64, y: f64) -> f64 {
    let n = line.len();
    let pos = (y / h).max(0.0);
    let k = pos.floor() as usize;
    if k + 1 >= n {
        return line[n - 1];
    }
    let w = pos - k as f64;
    (1.0 - w) * line[k] + w * line[k + 1]
}

/// Maxima over the lattice of `g(t, y + y_bar)/g(t, y)` and
/// `g(t + t_bar, y)/g(t, y)` for a positive field `g` (typically `d_y u^s`).
/// Shifted values are linearly interpolated and clamped at `y = Y`; the time
/// ratio is taken over `t <= T - r0`.
pub fn shift_ratios(g: &Field, y_bar: f64, t_bar: f64, r0: f64) -> Result<(f64, f64)> {
    let s = *g.spec();
    if !(r0 > 0.0 && r0 < s.t_final) {
        return Err(Error::InvalidArgument(format!("R_0 = {r0} must lie in (0, T)")));
    }
    if !(0.0..=r0).contains(&y_bar) || !(0.0..=r0).contains(&t_bar) {
        return Err(Error::InvalidArgument(format!(
            "shifts (y_bar = {y_bar}, t_bar = {t_bar}) must lie in [0, R_0 = {r0}]"
        )));
    }
    let (i, j, k, v) = g.argmin();
    if !(v > 0.0) {
        return Err(Error::NonMonotone { t: s.t(i), x: s.x(j), y: s.y(k), value: v });
    }
    let (dt, dy) = (s.dt(), s.dy());
    let mut ry = 0.0_f64;
    let mut rt = 0.0_f64;
    for i in 0..s.n_t {
        let t = s.t(i);
        let pos = (t + t_bar) / dt;
        let i0 = (pos.floor() as usize).min(s.n_t - 1);
        let i1 = (i0 + 1).min(s.n_t - 1);
        let wt = (pos - i0 as f64).clamp(0.0, 1.0);
        let in_window = t <= s.t_final - r0 + 1e-12 * s.t_final;
        for j in 0..s.n_x {
            let line = g.line(i, j);
            for (k, &base) in line.iter().enumerate() {
                ry = ry.max(lerp_line(line, dy, s.y(k) + y_bar) / base);
                if in_window {
                    let shifted = (1.0 - wt) * g.get(i0, j, k) + wt * g.get(i1, j, k);
                    rt = rt.max(shifted / base);
                }
            }
        }
    }
    Ok((ry, rt))
}
