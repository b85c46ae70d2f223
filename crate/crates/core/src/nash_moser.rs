//! Nash–Moser–Hörmander iteration for small perturbations of a shear flow.
//!
//! With `u^n = u^s + p^n`, each step mollifies the background
//! (`p_theta = S_theta p^n`, `v_theta = S_theta v^n`), solves the linearized
//! problem `P'_{(u_theta, v_theta)}(du, dv) = f^n`, and updates
//! `u^{n+1} = u^n + du`, `v^{n+1} = v^n + dv`. The sources follow
//!
//! ```text
//! f^0 = -S_0 f_a,
//! f^n = (S_{n-1} - S_n)(sum_{j<=n-2} e_j + f_a) - S_n e_{n-1},   n >= 1,
//! ```
//!
//! so that `sum_{j<=n} f^j = -S_n (sum_{j<n} e_j + f_a)`.
//!
//! The discrete Prandtl operator uses backward differences in `t` and `x`,
//! matching the backward-Euler, upwind inner solvers, so that the residual
//! `P(u^n, v^n)` measures the iteration rather than a mismatch between two
//! discretizations. The operator is written in perturbation form
//!
//! ```text
//! P(u^s + p, v) = D_t p + (u^s + p) D_x p + v (d_y u^s + D_y p) - D_yy p,
//! ```
//!
//! the heat equation being satisfied exactly by the kernel-evaluated shear.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{staggered_divergence, Axis, Field, GridSpec, Plane};
use crate::linearized::{solve_uv_direct, solve_w, Background, SolveOptions};
use crate::mollifier::{theta, Mollifier};
use crate::norms::{lambda_diagnostic, norm_d, plane_norm_a, Norms, TangentialIndexMode};
use crate::shear_flow::{ShearFlow, MAX_PROFILE_DERIVATIVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    #[default]
    ViaW,
    DirectUv,
}

/// Derivative convention for [`prandtl_operator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Backward differences in `t` and `x` (the iteration's operator).
    Upwind,
    /// Second-order centered differences from [`Field::derivative`].
    Central,
}

fn d_t(f: &Field, scheme: Scheme) -> Result<Field> {
    match scheme {
        Scheme::Upwind => f.backward_difference(Axis::T),
        Scheme::Central => f.derivative(Axis::T, 1),
    }
}

fn d_x(f: &Field, scheme: Scheme) -> Result<Field> {
    match scheme {
        Scheme::Upwind => f.backward_difference(Axis::X),
        Scheme::Central => f.derivative(Axis::X, 1),
    }
}

/// `P(u^s + p, v)`.
pub fn prandtl_operator(shear: &ShearFlow, p: &Field, v: &Field, scheme: Scheme) -> Result<Field> {
    let mut r = d_t(p, scheme)?;
    r.axpy(1.0, &shear.u_s.add(p).mul(&d_x(p, scheme)?));
    r.axpy(1.0, &v.mul(&shear.d_y_u_s.add(&p.derivative(Axis::Y, 1)?)));
    r.axpy(-1.0, &p.derivative(Axis::Y, 2)?);
    Ok(r)
}

/// `P'_{(u~, v~)}(du, dv)` with the iteration's derivative convention.
pub fn linearized_operator(bg: &Background, du: &Field, dv: &Field) -> Result<Field> {
    let mut r = du.backward_difference(Axis::T)?;
    r.axpy(1.0, &bg.u_tilde.mul(&du.backward_difference(Axis::X)?));
    r.axpy(1.0, &bg.v_tilde.mul(&du.derivative(Axis::Y, 1)?));
    r.axpy(1.0, &du.mul(&bg.perturbation.backward_difference(Axis::X)?));
    r.axpy(1.0, &dv.mul(&bg.d_y_u_tilde));
    r.axpy(-1.0, &du.derivative(Axis::Y, 2)?);
    Ok(r)
}

/// Newton error `du D_x du + dv D_y du`.
pub fn newton_error(du: &Field, dv: &Field) -> Result<Field> {
    Ok(du.mul(&du.backward_difference(Axis::X)?).add(&dv.mul(&du.derivative(Axis::Y, 1)?)))
}

/// Mollification error, four-term form, with `q = (1 - S) p`, `r = (1 - S) v`:
/// `q D_x du + du D_x q + dv D_y q + r D_y du`.
pub fn mollification_error(q: &Field, r: &Field, du: &Field, dv: &Field) -> Result<Field> {
    let mut e = q.mul(&du.backward_difference(Axis::X)?);
    e.axpy(1.0, &du.mul(&q.backward_difference(Axis::X)?));
    e.axpy(1.0, &dv.mul(&q.derivative(Axis::Y, 1)?));
    e.axpy(1.0, &r.mul(&du.derivative(Axis::Y, 1)?));
    Ok(e)
}

/// Conservative form of [`mollification_error`]:
/// `2 D_x(q du) + D_y(dv q + r du)`. It equals the four-term form in the
/// continuum when both pairs are divergence free; on the lattice the two
/// differ by truncation error.
pub fn mollification_error_factored(q: &Field, r: &Field, du: &Field, dv: &Field) -> Result<Field> {
    let a = q.mul(du).backward_difference(Axis::X)?.scale(2.0);
    let b = dv.mul(q).add(&r.mul(du)).derivative(Axis::Y, 1)?;
    Ok(a.add(&b))
}

/// Zero the rows that carry no equation: `t = 0`, `y = 0`, `y = Y`.
pub fn interior_mask(f: &Field) -> Field {
    let s = *f.spec();
    let mut g = f.clone();
    g.plane_data_mut(0).fill(0.0);
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            let line = g.line_mut(i, j);
            line[0] = 0.0;
            line[s.n_y - 1] = 0.0;
        }
    }
    g
}

/// `||f||_{A^0_ell}` over the equation rows.
pub fn residual_norm(f: &Field, ell: f64) -> Result<f64> {
    Norms::default().a(&interior_mask(f), 0, ell)
}

/// `eps sin(2 pi x / L_x) y exp(-y^2)`.
pub fn default_perturbation(spec: &GridSpec, epsilon: f64) -> Plane {
    let k = 2.0 * std::f64::consts::PI / spec.l_x;
    Plane::from_fn(spec, |x, y| epsilon * (k * x).sin() * y * (-y * y).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationConfig {
    pub epsilon: f64,
    /// Taylor order of the zeroth approximation, `1..=2`.
    pub k0: usize,
    pub theta0: f64,
    pub n_max: usize,
    pub inner_solver: InnerSolver,
    /// `(k, ell)` orders at which `||w^n||_{A^k_ell}` is tracked.
    pub monitor_orders: Vec<(usize, f64)>,
    pub tolerance_residual: f64,
    pub ell: f64,
    /// Defect-correction sweeps around each inner solve.
    pub inner_sweeps: usize,
    /// Relative defect at which the sweeps stop.
    pub inner_tol: f64,
    /// Evaluate `lambda^n_3` each step (the most expensive monitor).
    pub track_lambda: bool,
    pub tangential_index_mode: TangentialIndexMode,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            epsilon: 0.01,
            k0: 2,
            theta0: 60.0,
            n_max: 8,
            inner_solver: InnerSolver::ViaW,
            monitor_orders: vec![(1, 1.0)],
            tolerance_residual: 0.0,
            ell: 1.0,
            inner_sweeps: 6,
            inner_tol: 1e-9,
            track_lambda: true,
            tangential_index_mode: TangentialIndexMode::AllMultiIndices,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon = {} must be finite and >= 0", self.epsilon));
        }
        if self.k0 == 0 || 2 * self.k0 > MAX_PROFILE_DERIVATIVE {
            return bad(format!("k0 = {} must lie in 1..={}", self.k0, MAX_PROFILE_DERIVATIVE / 2));
        }
        if !(self.theta0 >= 4.0) || !self.theta0.is_finite() {
            return bad(format!("theta0 = {} must be >= 4", self.theta0));
        }
        if self.n_max == 0 {
            return bad("n_max must be >= 1".into());
        }
        if !(self.tolerance_residual >= 0.0) {
            return bad("tolerance_residual must be >= 0".into());
        }
        for &(k, _) in &self.monitor_orders {
            if k > crate::norms::MAX_NORM_ORDER {
                return Err(Error::UnsupportedNormOrder { k, max: crate::norms::MAX_NORM_ORDER });
            }
        }
        Ok(())
    }
}

/// Output of [`zeroth_approximation`].
#[derive(Debug, Clone)]
pub struct ZerothApproximation {
    /// `u~^0 = sum_j t^j/j! u~_0^j`.
    pub p0: Field,
    pub v0: Field,
    /// `P(u^0, v^0)` with the iteration's operator.
    pub f_a: Field,
    /// `(u~_0^j, v_0^j)` for `j = 0..=k0`.
    pub layers: Vec<(Plane, Plane)>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn minus_cumint_dx(p: &Plane) -> Result<Plane> {
    let mut v = p.derivative(Axis::X, 1)?.cumulative_integral_y().scale(-1.0);
    for j in 0..v.n_x {
        v.data[j * v.n_y] = 0.0;
    }
    Ok(v)
}

/// Time-derivative data at `t = 0` from the compatibility recursion
///
/// ```text
/// u_0^j = d_y^2 u_0^{j-1} - sum_k C(j-1, k) (u_0^k d_x u_0^{j-1-k} + v_0^k d_y u_0^{j-1-k}),
/// v_0^j = -int_0^y d_x u_0^j,
/// ```
///
/// with `u_0^j = u~_0^j + d_y^{2j} u_0^s`, followed by the Taylor polynomial in `t`.
pub fn zeroth_approximation(u0_tilde: &Plane, shear: &ShearFlow, k0: usize) -> Result<ZerothApproximation> {
    let s = *shear.spec();
    if u0_tilde.n_x != s.n_x || u0_tilde.n_y != s.n_y {
        return Err(Error::GridMismatch);
    }
    if k0 == 0 || 2 * k0 > MAX_PROFILE_DERIVATIVE {
        return Err(Error::InvalidArgument(format!("k0 = {k0} must lie in 1..=2")));
    }
    let wall = (0..s.n_x).map(|j| u0_tilde.get(j, 0).abs()).fold(0.0, f64::max);
    if wall > 1e-12 {
        return Err(Error::InvalidArgument(format!("initial perturbation does not vanish at the wall ({wall:e})")));
    }
    // Total data must be monotone.
    let dy0 = u0_tilde.derivative(Axis::Y, 1)?;
    for j in 0..s.n_x {
        for k in 0..s.n_y {
            let g = dy0.get(j, k) + shear.at(1, 0, k);
            if !(g > 0.0) {
                return Err(Error::NonMonotone { t: 0.0, x: s.x(j), y: s.y(k), value: g });
            }
        }
    }
    let profile = shear.profile();
    // d_y^m of the shear part of u_0^j (= d_y^{2j+m} u_0^s), x-independent.
    let shear_col = |j: usize, m: usize| -> Vec<f64> {
        (0..s.n_y).map(|k| profile.derivative(2 * j + m, s.y(k))).collect()
    };
    let mut layers: Vec<(Plane, Plane)> = vec![(u0_tilde.clone(), minus_cumint_dx(u0_tilde)?)];
    for j in 1..=k0 {
        let prev = &layers[j - 1].0;
        let mut next = prev.derivative(Axis::Y, 2)?;
        for kk in 0..j {
            let c = binomial(j - 1, kk);
            let (uk, vk) = &layers[kk];
            let ul = &layers[j - 1 - kk].0;
            let shear_k = shear_col(kk, 0);
            let shear_dy = shear_col(j - 1 - kk, 1);
            let ul_x = ul.derivative(Axis::X, 1)?;
            let ul_y = ul.derivative(Axis::Y, 1)?;
            for jx in 0..s.n_x {
                for k in 0..s.n_y {
                    let idx = jx * s.n_y + k;
                    let u_full = uk.data[idx] + shear_k[k];
                    let term = u_full * ul_x.data[idx] + vk.data[idx] * (ul_y.data[idx] + shear_dy[k]);
                    next.data[idx] -= c * term;
                }
            }
        }
        for jx in 0..s.n_x {
            next.data[jx * s.n_y] = 0.0;
        }
        let v = minus_cumint_dx(&next)?;
        layers.push((next, v));
    }
    let mut p0 = Field::zeros(&s);
    let mut v0 = Field::zeros(&s);
    for i in 0..s.n_t {
        let t = s.t(i);
        let mut coef = 1.0;
        for (j, (uj, vj)) in layers.iter().enumerate() {
            if j > 0 {
                coef *= t / j as f64;
            }
            for (d, &v) in p0.plane_data_mut(i).iter_mut().zip(&uj.data) {
                *d += coef * v;
            }
            for (d, &v) in v0.plane_data_mut(i).iter_mut().zip(&vj.data) {
                *d += coef * v;
            }
        }
    }
    let f_a = prandtl_operator(shear, &p0, &v0, Scheme::Upwind)?;
    Ok(ZerothApproximation { p0, v0, f_a, layers })
}

/// State after `n` steps.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub n: usize,
    /// `u^n - u^s`
    pub p: Field,
    pub v: Field,
    pub delta_u: Field,
    pub delta_v: Field,
    pub w: Field,
    pub f_n: Field,
    pub e1: Field,
    pub e2: Field,
    /// `sum_{j<n} e_j`
    pub e_history: Field,
    /// `||P(u^n, v^n)||_{A^0_ell}`
    pub residual: f64,
}

impl IterationState {
    pub fn u(&self, shear: &ShearFlow) -> Field {
        shear.u_s.add(&self.p)
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub theta: f64,
    pub dtheta: f64,
    pub w_norms: Vec<f64>,
    /// `||du^n||_{A^1_ell}`
    pub du_norm: f64,
    /// `||dv^n||_{D^0_0}`
    pub dv_norm: f64,
    /// `||e_n||_{A^0_ell}`
    pub e_norm: f64,
    pub e1_norm: f64,
    pub e2_norm: f64,
    pub f_norm: f64,
    /// `||P(u^n, v^n)||` before the step.
    pub residual: f64,
    /// `||P(u^{n+1}, v^{n+1})||` after the step.
    pub residual_next: f64,
    pub lambda3: Option<f64>,
    /// Relative defect of `P(u^{n+1}) - P(u^n) - P'(du) - e_n = 0`.
    pub identity_defect: f64,
    /// Relative defect of `sum_{j<=n} f^j + S_n(sum_{j<n} e_j + f_a) = 0`.
    pub telescoping_defect: f64,
    /// `||e2_four_term - e2_factored|| / ||e2_four_term||`.
    pub e2_form_gap: f64,
    /// Relative inner-solve defect `||P'(du) - f^n|| / ||f^n||`.
    pub inner_defect: f64,
    /// Staggered divergence of the mollified pair.
    pub mollified_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIterations,
    MonotoneGate(String),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: IterationState,
    pub trace: Vec<StepRecord>,
    pub stop: StopReason,
    pub initial_residual: f64,
    pub zeroth: ZerothApproximation,
    pub wall_time_s: f64,
}

/// The iteration driver; owns the running sums the source recursion needs.
pub struct NashMoser {
    shear: Arc<ShearFlow>,
    cfg: IterationConfig,
    mollifier: Mollifier,
    f_a: Field,
    /// `sum_{j<=n-2} e_j`
    e_older: Field,
    /// `e_{n-1}`
    e_last: Option<Field>,
    /// `sum_{j<n} f^j`
    f_sum: Field,
}

fn rel(defect: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        defect
    } else {
        defect / scale
    }
}

impl NashMoser {
    pub fn new(cfg: IterationConfig, shear: Arc<ShearFlow>, u0_tilde: &Plane) -> Result<(Self, IterationState, ZerothApproximation)> {
        cfg.validate()?;
        let zeroth = zeroth_approximation(u0_tilde, &shear, cfg.k0)?;
        let s = *shear.spec();
        let residual = residual_norm(&zeroth.f_a, cfg.ell)?;
        let z = Field::zeros(&s);
        let state = IterationState {
            n: 0,
            p: zeroth.p0.clone(),
            v: zeroth.v0.clone(),
            delta_u: z.clone(),
            delta_v: z.clone(),
            w: z.clone(),
            f_n: z.clone(),
            e1: z.clone(),
            e2: z.clone(),
            e_history: z.clone(),
            residual,
        };
        let nm = NashMoser {
            shear,
            cfg,
            mollifier: Mollifier::new(),
            f_a: zeroth.f_a.clone(),
            e_older: z.clone(),
            e_last: None,
            f_sum: z,
        };
        Ok((nm, state, zeroth))
    }

    pub fn config(&self) -> &IterationConfig {
        &self.cfg
    }

    fn theta(&self, n: usize) -> (f64, f64) {
        theta(n, self.cfg.theta0)
    }

    /// `f^n` from the recursion.
    fn source(&self, n: usize) -> Field {
        let sm = |f: &Field, m: usize| self.mollifier.smooth(f, self.theta(m).0);
        match &self.e_last {
            None => sm(&self.f_a, 0).scale(-1.0),
            Some(e_last) => {
                let a = self.e_older.add(&self.f_a);
                let mut f = sm(&a, n - 1).sub(&sm(&a, n));
                f.axpy(-1.0, &sm(e_last, n));
                f
            }
        }
    }

    fn inner_solve(&self, bg: &Background, f: &Field) -> Result<(Field, Field, Field)> {
        let opts = SolveOptions { implicit_tol: Some(1e-13), ..SolveOptions::default() };
        let solve = |rhs: &Field| -> Result<(Field, Field, Field)> {
            match self.cfg.inner_solver {
                InnerSolver::ViaW => {
                    let sol = solve_w(bg, rhs, &opts)?;
                    Ok((sol.u, sol.v, sol.w))
                }
                InnerSolver::DirectUv => {
                    let (u, v) = solve_uv_direct(bg, rhs, &opts)?;
                    let w = crate::grid::Field::zeros(u.spec());
                    Ok((u, v, w))
                }
            }
        };
        let (mut du, mut dv, mut w) = solve(f)?;
        let f_scale = residual_norm(f, self.cfg.ell)?;
        for _ in 0..self.cfg.inner_sweeps {
            let r = f.sub(&linearized_operator(bg, &du, &dv)?);
            if residual_norm(&r, self.cfg.ell)? <= self.cfg.inner_tol * f_scale {
                break;
            }
            let (cu, cv, cw) = solve(&r)?;
            du.axpy(1.0, &cu);
            dv.axpy(1.0, &cv);
            w.axpy(1.0, &cw);
        }
        Ok((du, dv, w))
    }

    /// One step `n -> n + 1`.
    pub fn iterate_once(&mut self, state: &IterationState) -> Result<(IterationState, StepRecord)> {
        let n = state.n;
        let ell = self.cfg.ell;
        let (th, dth) = self.theta(n);
        let p_theta = self.mollifier.smooth(&state.p, th);
        let v_theta = self.mollifier.smooth(&state.v, th);
        let mollified_divergence = staggered_divergence(&p_theta, &v_theta)?.map(|v| v * v).integral_txy().sqrt();
        let bg = Background::from_perturbation(&self.shear, p_theta.clone(), v_theta.clone())?;

        let f_n = self.source(n);
        let (du, dv, w) = self.inner_solve(&bg, &f_n)?;
        let lin = linearized_operator(&bg, &du, &dv)?;
        let inner_defect = rel(residual_norm(&lin.sub(&f_n), ell)?, residual_norm(&f_n, ell)?);

        let q = state.p.sub(&p_theta);
        let r = state.v.sub(&v_theta);
        let e1 = newton_error(&du, &dv)?;
        let e2 = mollification_error(&q, &r, &du, &dv)?;
        let e2_factored = mollification_error_factored(&q, &r, &du, &dv)?;
        let e = e1.add(&e2);

        let p_next = state.p.add(&du);
        let v_next = state.v.add(&dv);
        let shear = &*self.shear;
        let p_now = prandtl_operator(shear, &state.p, &state.v, Scheme::Upwind)?;
        let p_new = prandtl_operator(shear, &p_next, &v_next, Scheme::Upwind)?;

        let n_all = Norms::default();
        let a0 = |f: &Field| n_all.a(f, 0, ell);
        let identity = p_new.sub(&p_now).sub(&lin).sub(&e);
        let id_scale = a0(&p_new)?.max(a0(&p_now)?).max(a0(&lin)?).max(a0(&e)?);
        let identity_defect = rel(a0(&identity)?, id_scale);

        // Telescoping: sum_{j<=n} f^j + S_n(sum_{j<n} e_j + f_a).
        let f_sum = self.f_sum.add(&f_n);
        let smoothed = self.mollifier.smooth(&state.e_history.add(&self.f_a), th);
        let tele_scale = a0(&f_sum)?.max(a0(&smoothed)?);
        let telescoping_defect = rel(a0(&f_sum.add(&smoothed))?, tele_scale);

        let e2_norm = a0(&e2)?;
        let e2_form_gap = rel(a0(&e2.sub(&e2_factored))?, e2_norm);
        let residual_next = residual_norm(&p_new, ell)?;
        let w_norms = self
            .cfg
            .monitor_orders
            .iter()
            .map(|&(k, l)| Norms::new(self.cfg.tangential_index_mode).a(&w, k, l))
            .collect::<Result<Vec<_>>>()?;
        let lambda3 = if self.cfg.track_lambda { Some(lambda_diagnostic(&bg, 3, ell)?) } else { None };
        let record = StepRecord {
            n,
            theta: th,
            dtheta: dth,
            w_norms,
            du_norm: n_all.a(&du, 1, ell)?,
            dv_norm: norm_d(&dv, 0, 0.0)?,
            e_norm: a0(&e)?,
            e1_norm: a0(&e1)?,
            e2_norm,
            f_norm: a0(&f_n)?,
            residual: state.residual,
            residual_next,
            lambda3,
            identity_defect,
            telescoping_defect,
            e2_form_gap,
            inner_defect,
            mollified_divergence,
        };

        // Advance the recursion sums.
        if let Some(prev) = self.e_last.take() {
            self.e_older.axpy(1.0, &prev);
        }
        self.e_last = Some(e.clone());
        self.f_sum = f_sum;

        let next = IterationState {
            n: n + 1,
            p: p_next,
            v: v_next,
            delta_u: du,
            delta_v: dv,
            w,
            f_n,
            e1,
            e2,
            e_history: state.e_history.add(&e),
            residual: residual_next,
        };
        Ok((next, record))
    }
}

/// Zeroth approximation followed by up to `n_max` steps. A monotonicity
/// failure of a mollified background ends the run with
/// [`StopReason::MonotoneGate`] rather than an error.
pub fn run(cfg: &IterationConfig, shear: &Arc<ShearFlow>, u0_tilde: &Plane) -> Result<RunResult> {
    let start = Instant::now();
    let (mut nm, mut state, zeroth) = NashMoser::new(cfg.clone(), Arc::clone(shear), u0_tilde)?;
    let initial_residual = state.residual;
    let mut trace = Vec::with_capacity(cfg.n_max);
    let mut stop = StopReason::MaxIterations;
    if initial_residual <= cfg.tolerance_residual {
        stop = StopReason::Tolerance;
    } else {
        for _ in 0..cfg.n_max {
            match nm.iterate_once(&state) {
                Ok((next, record)) => {
                    log::info!(
                        "step {}: theta = {:.3}, residual {:.3e} -> {:.3e}",
                        record.n,
                        record.theta,
                        record.residual,
                        record.residual_next
                    );
                    state = next;
                    trace.push(record);
                    if state.residual <= cfg.tolerance_residual {
                        stop = StopReason::Tolerance;
                        break;
                    }
                }
                Err(e @ Error::NonMonotone { .. }) => {
                    stop = StopReason::MonotoneGate(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RunResult { state, trace, stop, initial_residual, zeroth, wall_time_s: start.elapsed().as_secs_f64() })
}

/// Result of [`fit_decay_exponent`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    /// Largest `k` for which the normalized sequence stays bounded.
    pub k_eff: f64,
    /// `||w^n|| / (theta_n^{1-k_eff} dtheta_n)` for the fitted exponent.
    pub normalized: Vec<f64>,
}

/// Fit the decay shape `||w^n|| <= C theta_n^{1-k} dtheta_n` over the steps
/// `n >= n_start`: returns the largest `k` for which the normalized sequence
/// never exceeds `growth` times its first entry. `order` indexes
/// [`StepRecord::w_norms`]. `None` if fewer than two steps qualify or a norm
/// vanishes.
pub fn fit_decay_exponent(trace: &[StepRecord], order: usize, n_start: usize, growth: f64) -> Option<DecayFit> {
    let steps: Vec<&StepRecord> = trace.iter().filter(|r| r.n >= n_start).collect();
    if steps.len() < 2 || !(growth >= 1.0) {
        return None;
    }
    let w = |r: &StepRecord| r.w_norms.get(order).copied();
    let first = steps[0];
    let w0 = w(first)?;
    if w0 <= 0.0 {
        return None;
    }
    let mut k_eff = f64::INFINITY;
    for r in &steps[1..] {
        let wn = w(r)?;
        if wn <= 0.0 {
            return None;
        }
        // (w_n/w_0) (dtheta_0/dtheta_n) (theta_n/theta_0)^{k-1} <= growth
        let base = (wn / w0) * (first.dtheta / r.dtheta);
        let lever = (r.theta / first.theta).ln();
        if lever > 0.0 {
            k_eff = k_eff.min(1.0 + (growth / base).ln() / lever);
        } else if base > growth {
            return None;
        }
    }
    let normalized = steps.iter().map(|r| w(r).unwrap_or(0.0) / (r.theta.powf(1.0 - k_eff) * r.dtheta)).collect();
    Some(DecayFit { k_eff, normalized })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityReport {
    pub ratio: f64,
    /// `||u^1 - u^2||_{A^0_ell} + ||v^1 - v^2||_{D^0_0}`
    pub solution_gap: f64,
    /// `||d_y((u_0^1 - u_0^2) / d_y u_0^s)||_{A^0_ell}` on the half-plane.
    pub data_gap: f64,
}

/// Run the iteration from two initial perturbations and compare the
/// solution difference with the data difference.
pub fn stability_experiment(
    cfg: &IterationConfig,
    shear: &Arc<ShearFlow>,
    u0_a: &Plane,
    u0_b: &Plane,
) -> Result<StabilityReport> {
    let ra = run(cfg, shear, u0_a)?;
    let rb = run(cfg, shear, u0_b)?;
    for r in [&ra, &rb] {
        if let StopReason::MonotoneGate(msg) = &r.stop {
            return Err(Error::InvalidArgument(format!("stability run left the monotone regime: {msg}")));
        }
    }
    let n = Norms::default();
    let solution_gap = n.a(&ra.state.p.sub(&rb.state.p), 0, cfg.ell)? + norm_d(&ra.state.v.sub(&rb.state.v), 0, 0.0)?;
    let s = *shear.spec();
    let g0 = Plane::from_fn(&s, |_, y| shear.profile().derivative(1, y));
    let q = u0_a.sub(u0_b).zip_map(&g0, |a, b| a / b).derivative(Axis::Y, 1)?;
    let data_gap = plane_norm_a(&q, 0, cfg.ell)?;
    let ratio = if data_gap == 0.0 {
        if solution_gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        solution_gap / data_gap
    };
    Ok(StabilityReport { ratio, solution_gap, data_gap })
}
