//! Seeded corpora, manufactured solutions and the scalar fits that the
//! verification experiments are assembled from. Shared by the command-line
//! drivers and the test suites so both measure exactly the same thing.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, Plane};
use crate::linearized::{energy_probe, lambda_gate, solve_uv_direct, solve_w, Background, SolveOptions};
use crate::mollifier::{theta, Commutator, Mollifier};
use crate::norms::Norms;
use crate::oracle::{solve_nonlinear_forced, OracleConfig};
use crate::quadrature::CompositeRule;
use crate::shear_flow::{ShearFlow, ShearProfile};

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `max / min` of positive values (infinite if any value is not positive).
pub fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + r.gen::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Fields smooth in `(t, y)` and broadband in `x`: each carries three
/// periodic modes with wavenumbers drawn log-uniformly from `1..=max_mode`.
pub fn tangential_corpus(spec: &GridSpec, n: usize, max_mode: usize, seed: u64) -> Vec<Field> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let modes: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    let m = log_uniform(&mut r, 1.0, max_mode as f64 + 0.999).floor();
                    (m, r.gen_range(0.5..1.0), r.gen_range(0.0..2.0 * PI))
                })
                .collect();
            let (ct, cy) = (r.gen_range(-0.5..0.5), r.gen_range(0.5..1.5));
            let (t_final, l_x) = (spec.t_final, spec.l_x);
            Field::from_fn(spec, move |t, x, y| {
                let osc: f64 = modes.iter().map(|&(m, a, ph)| a * (2.0 * PI * m * x / l_x + ph).cos()).sum();
                (1.0 + ct * t / t_final) * y * y * (-cy * y * y).exp() * osc
            })
        })
        .collect()
}

/// `C^infinity` bump on `(a, b)`, peak value 1.
fn bump(s: f64, a: f64, b: f64) -> f64 {
    if s <= a || s >= b {
        return 0.0;
    }
    let z = (2.0 * s - a - b) / (b - a);
    (1.0 - 1.0 / (1.0 - z * z)).exp()
}

/// Low-mode fields compactly supported inside `(0, T) x (0, Y)`.
pub fn interior_corpus(spec: &GridSpec, n: usize, seed: u64) -> Vec<Field> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let (t_final, y_max, l_x) = (spec.t_final, spec.y_max, spec.l_x);
            let m = r.gen_range(1..=3) as f64;
            let ph = r.gen_range(0.0..2.0 * PI);
            let (t0, t1) = (r.gen_range(0.05..0.25) * t_final, r.gen_range(0.75..0.95) * t_final);
            let (y0, y1) = (r.gen_range(0.05..0.2) * y_max, r.gen_range(0.6..0.9) * y_max);
            Field::from_fn(spec, move |t, x, y| bump(t, t0, t1) * bump(y, y0, y1) * (2.0 * PI * m * x / l_x + ph).cos())
        })
        .collect()
}

/// Quotients `h = f / d_y u^s` oscillating in `y` with frequencies drawn
/// log-uniformly from `[1, max_freq]`; returns the pairs `(f, h)`.
pub fn normal_oscillation_corpus(shear: &ShearFlow, n: usize, max_freq: f64, seed: u64) -> Vec<(Field, Field)> {
    let spec = *shear.spec();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let w = log_uniform(&mut r, 1.0, max_freq);
            let ph = r.gen_range(0.0..2.0 * PI);
            let m = r.gen_range(1..=2) as f64;
            let y_max = spec.y_max;
            let l_x = spec.l_x;
            let h = Field::from_fn(&spec, move |t, x, y| {
                (1.0 + 0.5 * t) * (2.0 * PI * m * x / l_x).cos() * (w * y + ph).cos() * (y / y_max) * (1.0 - y / y_max)
            });
            (h.mul(&shear.d_y_u_s), h)
        })
        .collect()
}

/// Constants fitted for one law at each `theta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawFit {
    pub thetas: Vec<f64>,
    /// Worst ratio over the corpus at each `theta`.
    pub kappa: Vec<f64>,
}

impl LawFit {
    pub fn spread(&self) -> f64 {
        spread(&self.kappa)
    }

    pub fn slope(&self) -> f64 {
        loglog_slope(&self.thetas, &self.kappa)
    }
}

/// `||S_theta f||_{A^2} <= kappa theta^2 ||f||_{A^0}`.
pub fn smoothing_law(corpus: &[Field], thetas: &[f64]) -> Result<LawFit> {
    let m = Mollifier::new();
    let n = Norms::default();
    let mut kappa = Vec::with_capacity(thetas.len());
    for &th in thetas {
        let mut worst = 0.0_f64;
        for f in corpus {
            let ratio = n.a(&m.smooth(f, th), 2, 0.0)? / (th * th * n.a(f, 0, 0.0)?);
            worst = worst.max(ratio);
        }
        kappa.push(worst);
    }
    Ok(LawFit { thetas: thetas.to_vec(), kappa })
}

/// `||(S_{theta_n} - S_{theta_{n-1}}) f||_{A^0} <= kappa theta_n^{-1} dtheta_n ||f||_{A^1}`
/// over `n = 1..=n_max`, one constant per schedule base `theta_0`.
pub fn difference_law(corpus: &[Field], theta0s: &[f64], n_max: usize) -> Result<LawFit> {
    let m = Mollifier::new();
    let n = Norms::default();
    let mut kappa = Vec::with_capacity(theta0s.len());
    for &th0 in theta0s {
        let mut worst = 0.0_f64;
        for f in corpus {
            let a1 = n.a(f, 1, 0.0)?;
            let mut prev = m.smooth(f, theta(0, th0).0);
            for step in 1..=n_max {
                let (th, _) = theta(step, th0);
                // theta_n - theta_{n-1}: the step that produced theta_n.
                let (_, dth) = theta(step - 1, th0);
                let cur = m.smooth(f, th);
                let ratio = n.a(&cur.sub(&prev), 0, 0.0)? / (dth / th * a1);
                worst = worst.max(ratio);
                prev = cur;
            }
        }
        kappa.push(worst);
    }
    Ok(LawFit { thetas: theta0s.to_vec(), kappa })
}

/// Per-field slopes of `log ||(1 - S_theta) f||_{A^0}` against `log theta`.
pub fn approximation_rates(corpus: &[Field], thetas: &[f64]) -> Result<Vec<f64>> {
    let m = Mollifier::new();
    let n = Norms::default();
    corpus
        .iter()
        .map(|f| {
            let errs = thetas.iter().map(|&th| n.a(&f.sub(&m.smooth(f, th)), 0, 0.0)).collect::<Result<Vec<_>>>()?;
            Ok(loglog_slope(thetas, &errs))
        })
        .collect()
}

/// `||commutator(f)||_{A^1} <= kappa ||f / d_y u^s||_{A^1}` at each `theta`;
/// the worst ratio over the corpus is reported.
pub fn commutator_law(corpus: &[(Field, Field)], shear: &ShearFlow, thetas: &[f64], variant: Commutator) -> Result<LawFit> {
    let m = Mollifier::new();
    let n = Norms::default();
    let mut kappa = Vec::with_capacity(thetas.len());
    for &th in thetas {
        let mut worst = 0.0_f64;
        for (f, h) in corpus {
            let ratio = n.a(&m.commutator(f, shear, th, variant)?, 1, 0.0)? / n.a(h, 1, 0.0)?;
            worst = worst.max(ratio);
        }
        kappa.push(worst);
    }
    Ok(LawFit { thetas: thetas.to_vec(), kappa })
}

/// Smooth right-hand sides `f = f~ d_y u^s` for the energy probes; the
/// quotients `f~` are random low-mode fields with exponential decay in `y`.
pub fn forcing_corpus(shear: &ShearFlow, n: usize, seed: u64) -> Vec<Field> {
    let spec = *shear.spec();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let modes: Vec<(f64, f64, f64)> =
                (0..2).map(|_| (r.gen_range(1..=3) as f64, r.gen_range(0.5..1.0), r.gen_range(0.0..2.0 * PI))).collect();
            let (c1, decay) = (r.gen_range(-1.0..1.0), r.gen_range(0.5..1.5));
            let (t_final, l_x) = (spec.t_final, spec.l_x);
            let ft = Field::from_fn(&spec, move |t, x, y| {
                let osc: f64 = modes.iter().map(|&(m, a, ph)| a * (2.0 * PI * m * x / l_x + ph).cos()).sum();
                (1.0 + c1 * t / t_final) * (1.0 + y) * (-decay * y).exp() * osc
            });
            ft.mul(&shear.d_y_u_s)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyFit {
    pub lambda: f64,
    pub kappa: f64,
    pub ratios: Vec<f64>,
}

/// Fitted `kappa = max lhs/rhs` of the weighted `L^2` estimate over the
/// forcing corpus, pure-shear background, `lambda` at the gate value. With
/// `tangential`, the probe is applied to `d_x w` against `d_x f~`.
pub fn energy_fit(shear: &Arc<ShearFlow>, corpus: &[Field], ell: f64, tangential: bool) -> Result<EnergyFit> {
    let bg = Background::pure_shear(shear)?;
    let lambda = lambda_gate(&bg, ell)?;
    let opts = SolveOptions { ell, lambda, ..SolveOptions::default() };
    let mut ratios = Vec::with_capacity(corpus.len());
    for f in corpus {
        let mut sol = solve_w(&bg, f, &opts)?;
        if tangential {
            sol.w = sol.w.derivative(crate::grid::Axis::X, 1)?;
            sol.f_tilde = sol.f_tilde.derivative(crate::grid::Axis::X, 1)?;
        }
        let probe = energy_probe(&sol, &bg, lambda, ell)?;
        ratios.push(probe.lhs / probe.rhs);
    }
    let kappa = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(EnergyFit { lambda, kappa, ratios })
}

/// One resolution of a manufactured-solution study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmsLevel {
    pub n_t: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub dt: f64,
    /// Relative `A^0_1` error.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmsStudy {
    pub levels: Vec<MmsLevel>,
    /// Least-squares order in `dt`.
    pub order: f64,
}

impl MmsStudy {
    fn from_levels(levels: Vec<MmsLevel>) -> Self {
        let dts: Vec<f64> = levels.iter().map(|l| l.dt).collect();
        let errs: Vec<f64> = levels.iter().map(|l| l.error).collect();
        MmsStudy { order: loglog_slope(&dts, &errs), levels }
    }
}

/// Which manufactured problem to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsProblem {
    /// `w* = t sin(kx) y e^{-y}` through the `w` formulation.
    LinearizedW,
    /// `u* = t sin(kx)(1 - e^{-y}) e^{-y}` through the direct solver.
    LinearizedDirect,
    /// `|u_via_w - u_direct| / |u_direct|` for the `w`-path forcing (the
    /// transform needs `u / d_y u^s` to stay bounded).
    Equivalence,
    /// `p* = a (1 + t) sin(kx)(1 - e^{-y}) e^{-y}` through the nonlinear oracle.
    Nonlinear,
}

fn rel_error(a: &Field, b: &Field) -> Result<f64> {
    let n = Norms::default();
    Ok(n.a(&a.sub(b), 0, 1.0)? / n.a(b, 0, 1.0)?)
}

/// `int_0^{y_k} q(s) ds` at every lattice `y_k`, by Gauss–Legendre per cell.
fn cumulative_quadrature(spec: &GridSpec, q: impl Fn(f64) -> f64) -> Vec<f64> {
    let rule = CompositeRule::new(0.0, 1.0, 1, 8);
    let dy = spec.dy();
    let mut out = vec![0.0; spec.n_y];
    for k in 1..spec.n_y {
        let y0 = spec.y(k - 1);
        out[k] = out[k - 1] + dy * rule.integrate(|s| q(y0 + s * dy));
    }
    out
}

const MMS_AMPLITUDE: f64 = 0.05;

/// Relative error of one manufactured problem on one lattice.
pub fn mms_error(problem: MmsProblem, shear: &Arc<ShearFlow>) -> Result<f64> {
    let spec = *shear.spec();
    let k = 2.0 * PI / spec.l_x;
    let sh = Arc::clone(shear);
    let ev = move |p: usize, t: f64, y: f64| sh.eval(p, t, y);
    let b = |y: f64| (-y).exp() - (-2.0 * y).exp();
    let b1 = |y: f64| -(-y).exp() + 2.0 * (-2.0 * y).exp();
    let b2 = |y: f64| (-y).exp() - 4.0 * (-2.0 * y).exp();
    match problem {
        MmsProblem::LinearizedW | MmsProblem::Equivalence => {
            let a = |y: f64| 1.0 - (1.0 + y) * (-y).exp();
            let a1 = |y: f64| y * (-y).exp();
            let a2 = |y: f64| (1.0 - y) * (-y).exp();
            // int_0^y g(t, s) A(s) ds per time level.
            let ga: Vec<Vec<f64>> =
                (0..spec.n_t).map(|i| cumulative_quadrature(&spec, |s| ev(1, spec.t(i), s) * a(s))).collect();
            let mut f = Field::zeros(&spec);
            for i in 0..spec.n_t {
                let t = spec.t(i);
                for j in 0..spec.n_x {
                    let (s, c) = ((k * spec.x(j)).sin(), (k * spec.x(j)).cos());
                    for kk in 0..spec.n_y {
                        let y = spec.y(kk);
                        let (us, g, gy, gyy) = (ev(0, t, y), ev(1, t, y), ev(2, t, y), ev(3, t, y));
                        let w = t * s * a(y);
                        let ut = gyy * w + g * s * a(y);
                        let ux = g * t * k * c * a(y);
                        let uyy = gyy * w + 2.0 * gy * t * s * a1(y) + g * t * s * a2(y);
                        let v = -t * k * c * ga[i][kk];
                        f.set(i, j, kk, ut + us * ux + v * g - uyy);
                    }
                }
            }
            let bg = Background::pure_shear(shear)?;
            let sol = solve_w(&bg, &f, &SolveOptions::default())?;
            if problem == MmsProblem::Equivalence {
                let (u, _) = solve_uv_direct(&bg, &f, &SolveOptions::default())?;
                return rel_error(&sol.u, &u);
            }
            let exact = Field::from_fn(&spec, |t, x, y| t * (k * x).sin() * a1(y));
            rel_error(&sol.w, &exact)
        }
        MmsProblem::LinearizedDirect => {
            let f = Field::from_fn(&spec, |t, x, y| {
                let (s, c) = ((k * x).sin(), (k * x).cos());
                let v = -0.5 * t * k * c * (1.0 - (-y).exp()).powi(2);
                s * b(y) + ev(0, t, y) * t * k * c * b(y) + v * ev(1, t, y) - t * s * b2(y)
            });
            let bg = Background::pure_shear(shear)?;
            let (u, _) = solve_uv_direct(&bg, &f, &SolveOptions::default())?;
            let exact = Field::from_fn(&spec, |t, x, y| t * (k * x).sin() * b(y));
            rel_error(&u, &exact)
        }
        MmsProblem::Nonlinear => {
            let a = MMS_AMPLITUDE;
            let src = Field::from_fn(&spec, |t, x, y| {
                let (s, c) = ((k * x).sin(), (k * x).cos());
                let amp = a * (1.0 + t);
                let p = amp * s * b(y);
                let (pt, px, py, pyy) = (a * s * b(y), amp * k * c * b(y), amp * s * b1(y), amp * s * b2(y));
                let v = -0.5 * amp * k * c * (1.0 - (-y).exp()).powi(2);
                pt + (ev(0, t, y) + p) * px + v * (ev(1, t, y) + py) - pyy
            });
            let p0 = Plane::from_fn(&spec, |x, y| a * (k * x).sin() * b(y));
            let sol = solve_nonlinear_forced(&p0, shear, &OracleConfig::default(), Some(&src))?;
            let exact = Field::from_fn(&spec, |t, x, y| a * (1.0 + t) * (k * x).sin() * b(y));
            rel_error(&sol.p, &exact)
        }
    }
}

/// Run a manufactured problem over `(n_t, n_x, n_y)` refinements.
pub fn mms_study(
    problem: MmsProblem,
    profile: &ShearProfile,
    t_final: f64,
    y_max: f64,
    l_x: f64,
    levels: &[(usize, usize, usize)],
) -> Result<MmsStudy> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument("a convergence study needs at least two levels".into()));
    }
    let mut out = Vec::with_capacity(levels.len());
    for &(n_t, n_x, n_y) in levels {
        let spec = GridSpec::new(t_final, y_max, l_x, n_t, n_x, n_y)?;
        let shear = Arc::new(ShearFlow::solve_heat_kernel(profile.clone(), &spec)?);
        let error = mms_error(problem, &shear)?;
        out.push(MmsLevel { n_t, n_x, n_y, dt: spec.dt(), error });
    }
    Ok(MmsStudy::from_levels(out))
}
