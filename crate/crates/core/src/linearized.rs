//! The linearized problem around a monotone background `(u~, v~)`:
//!
//! ```text
//! d_t u + u~ d_x u + v~ d_y u + u d_x u~ + v d_y u~ - d_y^2 u = f,
//! d_x u + d_y v = 0,   u|_{y=0} = v|_{y=0} = 0,   u|_{t=0} = 0,
//! ```
//!
//! solved either directly or through `w = d_y(u / d_y u~)`, which satisfies
//!
//! ```text
//! d_t w + d_x(u~ w) + d_y(v~ w) - 2 d_y(eta w) + d_y(zeta int_0^y w) - d_y^2 w = d_y f~,
//! (d_y w + 2 eta w)|_{y=0} = -f~|_{y=0},
//! ```
//!
//! with `eta = d_y^2 u~ / d_y u~`, `f~ = f / d_y u~` and
//! `zeta = (d_t + u~ d_x + v~ d_y - d_y^2) d_y u~ / d_y u~`.
//!
//! Backgrounds are stored as `u~ = u^s + p`: every derivative of the shear
//! part comes from the heat kernel, every derivative of `p` from finite
//! differences. In particular the heat operator annihilates the shear part
//! exactly, so `zeta` vanishes identically over a pure shear.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{staggered_divergence, Axis, Field, Plane};
use crate::norms::{bracket, lambda_diagnostic};
use crate::shear_flow::ShearFlow;

/// Coefficients of the linearized problem.
#[derive(Debug, Clone)]
pub struct Background {
    shear: Arc<ShearFlow>,
    /// `u~ - u^s`
    pub perturbation: Field,
    pub u_tilde: Field,
    pub v_tilde: Field,
    pub d_y_u_tilde: Field,
    pub d2_y_u_tilde: Field,
    pub eta: Field,
    pub eta_bar: Field,
    pub zeta: Field,
}

/// Fail with the first node where `g <= 0`.
pub(crate) fn monotone_gate(g: &Field) -> Result<()> {
    let (i, j, k, v) = g.argmin();
    if !(v > 0.0) || !v.is_finite() {
        let s = g.spec();
        return Err(Error::NonMonotone { t: s.t(i), x: s.x(j), y: s.y(k), value: v });
    }
    Ok(())
}

impl Background {
    /// Background `u~ = u^s + p` with a prescribed `v~`.
    pub fn from_perturbation(shear: &Arc<ShearFlow>, p: Field, v_tilde: Field) -> Result<Self> {
        if p.spec() != shear.spec() || v_tilde.spec() != shear.spec() {
            return Err(Error::GridMismatch);
        }
        let p_y = p.derivative(Axis::Y, 1)?;
        let p_yy = p.derivative(Axis::Y, 2)?;
        let d1 = shear.d_y_u_s.add(&p_y);
        monotone_gate(&d1)?;
        let u_tilde = shear.u_s.add(&p);
        let d2 = shear.d2_y_u_s.add(&p_yy);
        let eta = d2.div(&d1);
        let eta_bar = shear.d2_y_u_s.div(&d1);
        // (d_t + u~ d_x + v~ d_y - d_y^2) d_y u~, with (d_t - d_y^2) d_y u^s = 0.
        let q = &p_y;
        let q_t = q.derivative(Axis::T, 1)?;
        let q_x = q.derivative(Axis::X, 1)?;
        let q_y = q.derivative(Axis::Y, 1)?;
        let q_yy = q.derivative(Axis::Y, 2)?;
        let mut num = q_t.sub(&q_yy);
        num.axpy(1.0, &u_tilde.mul(&q_x));
        num.axpy(1.0, &v_tilde.mul(&shear.d2_y_u_s.add(&q_y)));
        let zeta = num.div(&d1);
        Ok(Background {
            shear: Arc::clone(shear),
            perturbation: p,
            u_tilde,
            v_tilde,
            d_y_u_tilde: d1,
            d2_y_u_tilde: d2,
            eta: eta.ensure_finite("eta")?,
            eta_bar: eta_bar.ensure_finite("eta_bar")?,
            zeta: zeta.ensure_finite("zeta")?,
        })
    }

    /// Background from a full `u~`; `v~ = -int_0^y d_x u~`.
    pub fn assemble(u_tilde: &Field, shear: &Arc<ShearFlow>) -> Result<Self> {
        let p = u_tilde.sub(&shear.u_s);
        let v = p.derivative(Axis::X, 1)?.cumulative_integral_y().scale(-1.0).enforce_wall_zero();
        Self::from_perturbation(shear, p, v)
    }

    /// The pure shear `u~ = u^s`, `v~ = 0`.
    pub fn pure_shear(shear: &Arc<ShearFlow>) -> Result<Self> {
        let z = Field::zeros(shear.spec());
        Self::from_perturbation(shear, z.clone(), z)
    }

    pub fn shear(&self) -> &ShearFlow {
        &self.shear
    }

    pub fn shear_arc(&self) -> &Arc<ShearFlow> {
        &self.shear
    }

    /// `||d_x u~ + d_y v~||_{L^2}` in the staggered form.
    pub fn divergence_defect(&self) -> Result<f64> {
        let d = staggered_divergence(&self.perturbation, &self.v_tilde)?;
        Ok(d.map(|v| v * v).integral_txy().sqrt())
    }

    /// `d_y u~` evaluated on the line `(t_i, x_j)`.
    fn d1_line(&self, i: usize, j: usize) -> &[f64] {
        self.d_y_u_tilde.line(i, j)
    }
}

/// Solver switches.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Weight exponent for the energy trace.
    pub ell: f64,
    /// Time damping for the energy trace.
    pub lambda: f64,
    /// Initial value of `w` (zero when absent).
    pub w0: Option<Plane>,
    /// Drop the `eta` terms (diagnostic mode).
    pub drop_eta: bool,
    /// Drop the nonlocal `zeta` term (diagnostic mode).
    pub drop_zeta: bool,
    /// Largest accepted transport Courant number.
    pub cfl_max: f64,
    /// When set, iterate the explicitly treated terms within each time step
    /// until the relative change drops below this tolerance, so the march
    /// solves the fully implicit discretization.
    pub implicit_tol: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { ell: 1.0, lambda: 0.0, w0: None, drop_eta: false, drop_zeta: false, cfl_max: 0.9, implicit_tol: None }
    }
}

#[derive(Debug, Clone)]
pub struct LinearizedSolution {
    pub w: Field,
    pub u: Field,
    pub v: Field,
    pub f_tilde: Field,
    pub residual_w: f64,
    pub residual_uv: f64,
    /// `(step, t, ||e^{-lambda t} w(t)||^2_{L^2_ell})`
    pub energy_trace: Vec<(usize, f64, f64)>,
}

pub(crate) fn check_cfl(u: &Field, cfl_max: f64) -> Result<()> {
    let s = u.spec();
    let courant = u.max_abs() * s.dt() / s.dx();
    if courant > cfl_max {
        return Err(Error::Cfl { courant });
    }
    Ok(())
}

/// Solve `a_k x_{k-1} + b_k x_k + c_k x_{k+1} = r_k` in place (`r` becomes
/// `x`); `a[0]` and `c[n-1]` are ignored.
pub(crate) fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &mut [f64], scratch: &mut [f64]) {
    let n = r.len();
    scratch[0] = c[0] / b[0];
    r[0] /= b[0];
    for k in 1..n {
        let m = b[k] - a[k] * scratch[k - 1];
        scratch[k] = c[k] / m;
        r[k] = (r[k] - a[k] * r[k - 1]) / m;
    }
    for k in (0..n - 1).rev() {
        r[k] -= scratch[k] * r[k + 1];
    }
}

/// Upwind approximation of `d_x(a q)` (conservative) or `a d_x q` at row `j`
/// of a plane, chosen per node by the sign of `a`.
pub(crate) fn upwind_x(a: &[f64], q: &[f64], nx: usize, ny: usize, j: usize, dx: f64, conservative: bool, out: &mut [f64]) {
    let jm = (j + nx - 1) % nx;
    let jp = (j + 1) % nx;
    for k in 0..ny {
        let aj = a[j * ny + k];
        let (jj, sign) = if aj >= 0.0 { (jm, 1.0) } else { (jp, -1.0) };
        out[k] = if conservative {
            sign * (aj * q[j * ny + k] - a[jj * ny + k] * q[jj * ny + k]) / dx
        } else {
            sign * aj * (q[j * ny + k] - q[jj * ny + k]) / dx
        };
    }
}

/// Periodic centered `d_x` of row `j` of a plane.
pub(crate) fn centered_x(q: &[f64], nx: usize, ny: usize, j: usize, dx: f64, out: &mut [f64]) {
    let jm = (j + nx - 1) % nx;
    let jp = (j + 1) % nx;
    for k in 0..ny {
        out[k] = (q[jp * ny + k] - q[jm * ny + k]) / (2.0 * dx);
    }
}

fn cumint(src: &[f64], h: f64, out: &mut [f64]) {
    out[0] = 0.0;
    for k in 1..src.len() {
        out[k] = out[k - 1] + 0.5 * h * (src[k - 1] + src[k]);
    }
}

/// `||e^{-lambda t_i} w(t_i)||^2_{L^2_ell}` on one plane.
fn plane_energy(data: &[f64], ny: usize, dx: f64, dy: f64, ell: f64) -> f64 {
    let mut acc = 0.0;
    for line in data.chunks(ny) {
        for (k, v) in line.iter().enumerate() {
            let w = if k == 0 || k + 1 == ny { 0.5 * dy } else { dy };
            acc += w * bracket(k as f64 * dy).powf(2.0 * ell) * v * v;
        }
    }
    acc * dx
}

/// March the `w` equation with IMEX backward Euler, then reconstruct
/// `u = d_y u~ int_0^y w` and `v = -int_0^y d_x u`.
///
/// Implicit: diffusion and the local normal terms `d_y((2 eta - v~) w)`,
/// giving one tridiagonal system per `x` column whose first row is the Robin
/// condition (second-order one-sided, with `w_2` eliminated using row 1).
/// Explicit: upwind `d_x(u~ w)` and the nonlocal `d_y(zeta int w)`.
/// Coefficients and forcing are taken at the new time level; `w(Y) = 0`.
/// With [`SolveOptions::implicit_tol`] set, the explicit terms are iterated
/// within each step until the new level stops changing.
pub fn solve_w(bg: &Background, f: &Field, opts: &SolveOptions) -> Result<LinearizedSolution> {
    let s = *bg.u_tilde.spec();
    if f.spec() != &s {
        return Err(Error::GridMismatch);
    }
    check_cfl(&bg.u_tilde, opts.cfl_max)?;
    let f_tilde = f.div(&bg.d_y_u_tilde).ensure_finite("f / d_y u~")?;
    let (nx, ny) = (s.n_x, s.n_y);
    let (dt, dx, dy) = (s.dt(), s.dx(), s.dy());
    let pl = s.plane_len();

    let mut w = Field::zeros(&s);
    if let Some(w0) = &opts.w0 {
        if w0.data.len() != pl {
            return Err(Error::GridMismatch);
        }
        w.plane_data_mut(0).copy_from_slice(&w0.data);
        for j in 0..nx {
            w.line_mut(0, j)[ny - 1] = 0.0;
        }
    }

    let n_unk = ny - 1;
    for i in 1..s.n_t {
        let (head, tail) = w.data_mut().split_at_mut(i * pl);
        let old = &head[(i - 1) * pl..];
        let new = &mut tail[..pl];
        let u_pl = bg.u_tilde.plane_data(i);
        let mut lag = old.to_vec();
        for sweep in 0.. {
            let step = |(j, out): (usize, &mut [f64])| -> Result<()> {
                let eta = bg.eta.line(i, j);
                let vt = bg.v_tilde.line(i, j);
                let zeta = bg.zeta.line(i, j);
                let ft = f_tilde.line(i, j);
                let wo = &old[j * ny..(j + 1) * ny];
                let b_coef: Vec<f64> =
                    (0..ny).map(|k| if opts.drop_eta { 0.0 } else { 2.0 * eta[k] } - vt[k]).collect();
                let mut transport = vec![0.0; ny];
                upwind_x(u_pl, &lag, nx, ny, j, dx, true, &mut transport);
                let mut big_w = vec![0.0; ny];
                cumint(&lag[j * ny..(j + 1) * ny], dy, &mut big_w);

                let mut a = vec![0.0; n_unk];
                let mut b = vec![0.0; n_unk];
                let mut c = vec![0.0; n_unk];
                let mut r = vec![0.0; n_unk];
                for k in 1..n_unk {
                    a[k] = -1.0 / (dy * dy) + b_coef[k - 1] / (2.0 * dy);
                    b[k] = 1.0 / dt + 2.0 / (dy * dy);
                    c[k] = -1.0 / (dy * dy) - b_coef[k + 1] / (2.0 * dy);
                    let nonlocal = if opts.drop_zeta {
                        0.0
                    } else {
                        (zeta[k + 1] * big_w[k + 1] - zeta[k - 1] * big_w[k - 1]) / (2.0 * dy)
                    };
                    r[k] = wo[k] / dt - transport[k] - nonlocal + (ft[k + 1] - ft[k - 1]) / (2.0 * dy);
                }
                // Robin row: (-3 w0 + 4 w1 - w2)/(2 dy) + 2 eta_0 w0 = -f~_0.
                let eta0 = if opts.drop_eta { 0.0 } else { eta[0] };
                let (alpha, beta, gamma) = (-1.5 / dy + 2.0 * eta0, 2.0 / dy, -0.5 / dy);
                if n_unk < 3 || c[1].abs() < 1e-300 {
                    return Err(Error::RobinSingular { pivot: c.get(1).copied().unwrap_or(0.0) });
                }
                let m = gamma / c[1];
                b[0] = alpha - m * a[1];
                c[0] = beta - m * b[1];
                r[0] = -ft[0] - m * r[1];
                let scale = b[0].abs().max(c[0].abs());
                if !(b[0].abs() > 1e-12 * scale) {
                    return Err(Error::RobinSingular { pivot: b[0] });
                }
                let mut scratch = vec![0.0; n_unk];
                thomas(&a, &b, &c, &mut r, &mut scratch);
                out[..n_unk].copy_from_slice(&r);
                out[ny - 1] = 0.0;
                Ok(())
            };
            new.par_chunks_mut(ny).enumerate().try_for_each(step)?;
            match opts.implicit_tol {
                Some(tol) if sweep < MAX_IMPLICIT_SWEEPS => {
                    if converged(new, &lag, tol) {
                        break;
                    }
                    lag.copy_from_slice(new);
                }
                _ => break,
            }
        }
    }
    let w = w.ensure_finite("w march")?;
    let u = bg.d_y_u_tilde.mul(&w.cumulative_integral_y()).enforce_wall_zero();
    let v = u.derivative(Axis::X, 1)?.cumulative_integral_y().scale(-1.0).enforce_wall_zero();
    let residual_w = w_residual(bg, &w, &f_tilde)?;
    let residual_uv = uv_residual(bg, &u, &v, f)?;
    let energy_trace = (0..s.n_t)
        .map(|i| {
            let damp = (-2.0 * opts.lambda * s.t(i)).exp();
            (i, s.t(i), damp * plane_energy(w.plane_data(i), ny, dx, dy, opts.ell))
        })
        .collect();
    Ok(LinearizedSolution { w, u, v, f_tilde, residual_w, residual_uv, energy_trace })
}

/// Cap on within-step iterations when [`SolveOptions::implicit_tol`] is set.
const MAX_IMPLICIT_SWEEPS: usize = 200;

fn converged(new: &[f64], lag: &[f64], tol: f64) -> bool {
    let (mut diff, mut size) = (0.0_f64, 0.0_f64);
    for (a, b) in new.iter().zip(lag) {
        diff = diff.max((a - b).abs());
        size = size.max(a.abs());
    }
    diff <= tol * size || diff == 0.0
}

/// Direct solution of the `(u, v)` system with the same time discretization:
/// implicit diffusion, `v~ d_y u` and `u d_x u~`; explicit upwind
/// `u~ d_x u` and `v d_y u~` with `v` rebuilt from the divergence constraint
/// at the previous level. Dirichlet `u = 0` at `y = 0` and `y = Y`.
///
/// `d_x u~` in the reaction term is the backward difference of the
/// perturbation, matching the upwind transport of a non-negative `u~`.
pub fn solve_uv_direct(bg: &Background, f: &Field, opts: &SolveOptions) -> Result<(Field, Field)> {
    let s = *bg.u_tilde.spec();
    if f.spec() != &s {
        return Err(Error::GridMismatch);
    }
    check_cfl(&bg.u_tilde, opts.cfl_max)?;
    let p_x = bg.perturbation.backward_difference(Axis::X)?;
    let (nx, ny) = (s.n_x, s.n_y);
    let (dt, dx, dy) = (s.dt(), s.dx(), s.dy());
    let pl = s.plane_len();
    let mut u = Field::zeros(&s);
    let n_unk = ny - 2;
    for i in 1..s.n_t {
        let (head, tail) = u.data_mut().split_at_mut(i * pl);
        let old = &head[(i - 1) * pl..];
        let new = &mut tail[..pl];
        let u_pl = bg.u_tilde.plane_data(i);
        let mut lag = old.to_vec();
        for sweep in 0.. {
            new.par_chunks_mut(ny).enumerate().for_each(|(j, out)| {
                let vt = bg.v_tilde.line(i, j);
                let ux = p_x.line(i, j);
                let d1 = bg.d1_line(i, j);
                let fl = f.line(i, j);
                let mut transport = vec![0.0; ny];
                upwind_x(u_pl, &lag, nx, ny, j, dx, false, &mut transport);
                let mut dxu = vec![0.0; ny];
                centered_x(&lag, nx, ny, j, dx, &mut dxu);
                let mut minus_v = vec![0.0; ny];
                cumint(&dxu, dy, &mut minus_v);
                let mut a = vec![0.0; n_unk];
                let mut b = vec![0.0; n_unk];
                let mut c = vec![0.0; n_unk];
                let mut r = vec![0.0; n_unk];
                for (row, k) in (1..ny - 1).enumerate() {
                    a[row] = -1.0 / (dy * dy) - vt[k] / (2.0 * dy);
                    b[row] = 1.0 / dt + 2.0 / (dy * dy) + ux[k];
                    c[row] = -1.0 / (dy * dy) + vt[k] / (2.0 * dy);
                    r[row] = old[j * ny + k] / dt - transport[k] + minus_v[k] * d1[k] + fl[k];
                }
                let mut scratch = vec![0.0; n_unk];
                thomas(&a, &b, &c, &mut r, &mut scratch);
                out[0] = 0.0;
                out[1..ny - 1].copy_from_slice(&r);
                out[ny - 1] = 0.0;
            });
            match opts.implicit_tol {
                Some(tol) if sweep < MAX_IMPLICIT_SWEEPS => {
                    if converged(new, &lag, tol) {
                        break;
                    }
                    lag.copy_from_slice(new);
                }
                _ => break,
            }
        }
    }
    let u = u.ensure_finite("direct march")?.enforce_wall_zero();
    let v = u.derivative(Axis::X, 1)?.cumulative_integral_y().scale(-1.0).enforce_wall_zero();
    Ok((u, v))
}

/// `L^2` norm over nodes with `0 < k < n_y - 1`.
fn interior_l2(r: &Field) -> f64 {
    let s = r.spec();
    let mut acc = 0.0;
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            let line = r.line(i, j);
            for k in 1..s.n_y - 1 {
                acc += s.weight_t(i) * s.weight_y(k) * line[k] * line[k];
            }
        }
    }
    (acc * s.dx()).sqrt()
}

/// Residual of the continuous `w` equation evaluated with lattice
/// derivatives (a consistency measure, not the algebraic solver residual).
pub fn w_residual(bg: &Background, w: &Field, f_tilde: &Field) -> Result<f64> {
    let big_w = w.cumulative_integral_y();
    let mut r = w.derivative(Axis::T, 1)?;
    r.axpy(1.0, &bg.u_tilde.mul(w).derivative(Axis::X, 1)?);
    r.axpy(1.0, &bg.v_tilde.mul(w).derivative(Axis::Y, 1)?);
    r.axpy(-2.0, &bg.eta.mul(w).derivative(Axis::Y, 1)?);
    r.axpy(1.0, &bg.zeta.mul(&big_w).derivative(Axis::Y, 1)?);
    r.axpy(-1.0, &w.derivative(Axis::Y, 2)?);
    r.axpy(-1.0, &f_tilde.derivative(Axis::Y, 1)?);
    Ok(interior_l2(&r))
}

/// `P'_{(u~, v~)}(u, v)` with lattice derivatives; `d_x u~ = d_x p` and
/// `d_y u~` includes the kernel-exact shear derivative.
pub fn apply_linearized(bg: &Background, u: &Field, v: &Field) -> Result<Field> {
    let mut r = u.derivative(Axis::T, 1)?;
    r.axpy(1.0, &bg.u_tilde.mul(&u.derivative(Axis::X, 1)?));
    r.axpy(1.0, &bg.v_tilde.mul(&u.derivative(Axis::Y, 1)?));
    r.axpy(1.0, &u.mul(&bg.perturbation.derivative(Axis::X, 1)?));
    r.axpy(1.0, &v.mul(&bg.d_y_u_tilde));
    r.axpy(-1.0, &u.derivative(Axis::Y, 2)?);
    Ok(r)
}

pub fn uv_residual(bg: &Background, u: &Field, v: &Field, f: &Field) -> Result<f64> {
    Ok(interior_l2(&apply_linearized(bg, u, v)?.sub(f)))
}

/// Outcome of [`energy_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyProbe {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda: f64,
    /// `(4 ell (1 + lambda_3))^2` with the measured `lambda_3`.
    pub lambda_gate: f64,
    pub gate_passed: bool,
}

/// `int_0^1 s^n e^{-c s} ds` for `n = 0, 1, 2`.
fn exp_moments(c: f64) -> [f64; 3] {
    if c.abs() < 1e-3 {
        let m = |n: f64| 1.0 / (n + 1.0) - c / (n + 2.0) + c * c / (2.0 * (n + 3.0)) - c * c * c / (6.0 * (n + 4.0));
        return [m(0.0), m(1.0), m(2.0)];
    }
    let e = (-c).exp();
    [(1.0 - e) / c, (1.0 - e * (1.0 + c)) / (c * c), (2.0 - e * (c * c + 2.0 * c + 2.0)) / (c * c * c)]
}

/// Weighted energy functionals of `w` against `f~`, with time integrals
/// evaluated exactly for the piecewise-linear-in-`t` interpolants so that
/// large `lambda dt` stays accurate:
///
/// * `sup_t ||e^{-lambda t} w||^2_{L^2_ell}` (sup over the interpolant),
/// * `||w||^2_{B^{0,0}_{lambda,ell}}`, `||d_y w||^2_{B^{0,0}_{lambda,ell}}`,
///   `||f~||^2_{B^{0,0}_{lambda,ell}}`.
#[derive(Debug, Clone, Copy)]
pub struct EnergyTerms {
    pub sup: f64,
    pub w_sq: f64,
    pub wy_sq: f64,
    pub f_sq: f64,
}

/// Plane-pair quadratic forms `(<a,a>, <a,b>, <b,b>)` in the weighted
/// `L^2_ell(x, y)` inner product.
fn plane_forms(a: &[f64], b: &[f64], ny: usize, wy: &[f64], dx: f64) -> [f64; 3] {
    let mut q = [0.0; 3];
    for (la, lb) in a.chunks(ny).zip(b.chunks(ny)) {
        for k in 0..ny {
            q[0] += wy[k] * la[k] * la[k];
            q[1] += wy[k] * la[k] * lb[k];
            q[2] += wy[k] * lb[k] * lb[k];
        }
    }
    q.map(|v| v * dx)
}

fn damped_time_integral(f: &Field, lambda: f64, wy: &[f64]) -> f64 {
    let s = f.spec();
    let c = 2.0 * lambda * s.dt();
    let [m0, m1, m2] = exp_moments(c);
    let (iaa, iab, ibb) = (m0 - 2.0 * m1 + m2, m1 - m2, m2);
    (0..s.n_t - 1)
        .map(|i| {
            let q = plane_forms(f.plane_data(i), f.plane_data(i + 1), s.n_y, wy, s.dx());
            s.dt() * (-2.0 * lambda * s.t(i)).exp() * (q[0] * iaa + 2.0 * q[1] * iab + q[2] * ibb)
        })
        .sum()
}

pub fn energy_terms(w: &Field, f_tilde: &Field, lambda: f64, ell: f64) -> Result<EnergyTerms> {
    let s = *w.spec();
    let wy: Vec<f64> = (0..s.n_y).map(|k| s.weight_y(k) * bracket(s.y(k)).powf(2.0 * ell)).collect();
    let mut sup = 0.0_f64;
    const SUBSAMPLES: usize = 16;
    for i in 0..s.n_t - 1 {
        let q = plane_forms(w.plane_data(i), w.plane_data(i + 1), s.n_y, &wy, s.dx());
        for m in 0..=SUBSAMPLES {
            let r = m as f64 / SUBSAMPLES as f64;
            let t = s.t(i) + r * s.dt();
            let e = (1.0 - r) * (1.0 - r) * q[0] + 2.0 * r * (1.0 - r) * q[1] + r * r * q[2];
            sup = sup.max((-2.0 * lambda * t).exp() * e);
        }
    }
    let w_y = w.derivative(Axis::Y, 1)?;
    Ok(EnergyTerms {
        sup,
        w_sq: damped_time_integral(w, lambda, &wy),
        wy_sq: damped_time_integral(&w_y, lambda, &wy),
        f_sq: damped_time_integral(f_tilde, lambda, &wy),
    })
}

/// `lhs = sup_t ||e^{-lambda t} w||^2 + lambda ||w||^2_B + ||d_y w||^2_B`,
/// `rhs = ||f~||^2_B`, together with the `lambda` gate
/// `(4 ell (1 + lambda_3))^2`.
pub fn energy_probe(sol: &LinearizedSolution, bg: &Background, lambda: f64, ell: f64) -> Result<EnergyProbe> {
    let lambda_gate = lambda_gate(bg, ell)?;
    let e = energy_terms(&sol.w, &sol.f_tilde, lambda, ell)?;
    Ok(EnergyProbe {
        lhs: e.sup + lambda * e.w_sq + e.wy_sq,
        rhs: e.f_sq,
        lambda,
        lambda_gate,
        gate_passed: lambda >= lambda_gate,
    })
}

/// `(4 ell (1 + lambda_3))^2` for a background.
pub fn lambda_gate(bg: &Background, ell: f64) -> Result<f64> {
    let l3 = lambda_diagnostic(bg, 3, ell)?;
    Ok((4.0 * ell * (1.0 + l3)).powi(2))
}
