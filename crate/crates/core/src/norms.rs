//! Weighted anisotropic Sobolev functionals.
//!
//! All norms are built from the seminorm pieces
//! `e^{-lambda t} <y>^ell d_T^m d_y^q f`, where `d_T^m` ranges over the
//! tangential multi-indices `(b0, b1)` with `b0 + b1 = m` (`d_t^{b0} d_x^{b1}`)
//! and `<y> = sqrt(1 + y^2)`:
//!
//! * `A^k_ell`: squared `L^2` pieces over `m + floor((q+1)/2) <= k`;
//! * `B^{k1,k2}_{lambda,ell}`: squared `L^2` pieces over `m <= k1, q <= k2`;
//! * `C^k_ell`: summed `L^2_y(L^inf_{t,x})` pieces over the `A` index set;
//! * `D^k_ell`: summed `L^inf_y(L^2_{t,x})` pieces over the `A` index set.
//!
//! Dotted variants drop the `(m, q) = (0, 0)` piece. Suprema are lattice
//! maxima.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Field, Plane};
use crate::linearized::Background;

/// Highest anisotropic order `k` accepted by the `A`, `C`, `D` norms.
pub const MAX_NORM_ORDER: usize = 3;

/// How pieces sharing a total tangential order are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentialIndexMode {
    /// Every multi-index `(b0, b1)` of order `m` contributes its own piece.
    #[default]
    AllMultiIndices,
    /// Only the largest piece per order `m` contributes.
    MaxPerOrder,
}

#[inline]
pub fn bracket(y: f64) -> f64 {
    (1.0 + y * y).sqrt()
}

#[derive(Debug, Clone, Copy)]
enum Reduction {
    /// `||e^{-lambda t}<y>^ell g||^2_{L^2(txy)}`
    L2Squared { lambda: f64, ell: f64 },
    /// `||<y>^ell g||_{L^2_y(L^inf_{t,x})}`
    SupTxL2Y { ell: f64 },
    /// `||<y>^ell g||_{L^inf_y(L^2_{t,x})}`
    L2TxSupY { ell: f64 },
}

fn reduce(g: &Field, red: Reduction) -> f64 {
    let s = g.spec();
    match red {
        Reduction::L2Squared { lambda, ell } => {
            let wy: Vec<f64> = (0..s.n_y).map(|k| s.weight_y(k) * bracket(s.y(k)).powf(2.0 * ell)).collect();
            let mut acc = 0.0;
            for i in 0..s.n_t {
                let wt = s.weight_t(i) * (-2.0 * lambda * s.t(i)).exp();
                let mut plane = 0.0;
                for j in 0..s.n_x {
                    plane += g.line(i, j).iter().zip(&wy).map(|(v, w)| w * v * v).sum::<f64>();
                }
                acc += wt * plane;
            }
            acc * s.dx()
        }
        Reduction::SupTxL2Y { ell } => {
            let mut sup = vec![0.0_f64; s.n_y];
            for i in 0..s.n_t {
                for j in 0..s.n_x {
                    for (m, v) in sup.iter_mut().zip(g.line(i, j)) {
                        *m = m.max(v.abs());
                    }
                }
            }
            sup.iter()
                .enumerate()
                .map(|(k, m)| s.weight_y(k) * (bracket(s.y(k)).powf(ell) * m).powi(2))
                .sum::<f64>()
                .sqrt()
        }
        Reduction::L2TxSupY { ell } => {
            let mut l2 = vec![0.0_f64; s.n_y];
            for i in 0..s.n_t {
                let wt = s.weight_t(i) * s.dx();
                for j in 0..s.n_x {
                    for (a, v) in l2.iter_mut().zip(g.line(i, j)) {
                        *a += wt * v * v;
                    }
                }
            }
            l2.iter().enumerate().map(|(k, a)| bracket(s.y(k)).powf(ell) * a.sqrt()).fold(0.0, f64::max)
        }
    }
}

/// Visit `d_y^q base` for `q = 0..=q_max`, composing the order-1 and order-2
/// stencils the same way as [`Field::derivative_n`].
fn y_chain(base: &Field, q_max: usize, mut visit: impl FnMut(usize, &Field)) -> Result<()> {
    visit(0, base);
    if q_max == 0 {
        return Ok(());
    }
    let mut odd = base.derivative(Axis::Y, 1)?;
    visit(1, &odd);
    let mut even = base.clone();
    for q in 2..=q_max {
        if q % 2 == 0 {
            even = even.derivative(Axis::Y, 2)?;
            visit(q, &even);
        } else {
            odd = odd.derivative(Axis::Y, 2)?;
            visit(q, &odd);
        }
    }
    Ok(())
}

/// Pieces of a norm keyed by `(m, q)`, combined across multi-indices
/// according to `mode`: squared values for `L^2`-type reductions are summed,
/// mixed-norm values are summed as norms.
fn pieces(
    f: &Field,
    m_max: usize,
    q_max: impl Fn(usize) -> Option<usize>,
    red: Reduction,
    mode: TangentialIndexMode,
) -> Result<BTreeMap<(usize, usize), f64>> {
    let mut out = BTreeMap::new();
    for m in 0..=m_max {
        let Some(qm) = q_max(m) else { continue };
        for b0 in 0..=m {
            let b1 = m - b0;
            let base = f.derivative_n(Axis::T, b0)?.derivative_n(Axis::X, b1)?;
            y_chain(&base, qm, |q, g| {
                let v = reduce(g, red);
                let slot = out.entry((m, q)).or_insert(0.0);
                match mode {
                    TangentialIndexMode::AllMultiIndices => *slot += v,
                    TangentialIndexMode::MaxPerOrder => *slot = f64::max(*slot, v),
                }
            })?;
        }
    }
    Ok(out)
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_NORM_ORDER {
        return Err(Error::UnsupportedNormOrder { k, max: MAX_NORM_ORDER });
    }
    Ok(())
}

/// Largest `q` with `m + floor((q+1)/2) <= k`, if any.
fn a_q_max(k: usize, m: usize) -> Option<usize> {
    (m <= k).then(|| 2 * (k - m))
}

/// Evaluator carrying the tangential index convention.
#[derive(Debug, Clone, Copy, Default)]
pub struct Norms {
    pub mode: TangentialIndexMode,
}

impl Norms {
    pub fn new(mode: TangentialIndexMode) -> Self {
        Norms { mode }
    }

    /// Squared pieces of `A^k_ell` keyed by `(m, q)`.
    pub fn a_pieces(&self, f: &Field, k: usize, ell: f64) -> Result<BTreeMap<(usize, usize), f64>> {
        check_order(k)?;
        pieces(f, k, |m| a_q_max(k, m), Reduction::L2Squared { lambda: 0.0, ell }, self.mode)
    }

    pub fn a(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        Ok(self.a_pieces(f, k, ell)?.values().sum::<f64>().sqrt())
    }

    pub fn a_dot(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        Ok(self.a_pieces(f, k, ell)?.iter().filter(|(mq, _)| **mq != (0, 0)).map(|(_, v)| v).sum::<f64>().sqrt())
    }

    /// Squared pieces of `B^{k1,k2}_{lambda,ell}` keyed by `(m, q)`.
    pub fn b_pieces(&self, f: &Field, k1: usize, k2: usize, lambda: f64, ell: f64) -> Result<BTreeMap<(usize, usize), f64>> {
        check_order(k1)?;
        if k2 > 2 * MAX_NORM_ORDER {
            return Err(Error::UnsupportedNormOrder { k: k2, max: 2 * MAX_NORM_ORDER });
        }
        pieces(f, k1, |_| Some(k2), Reduction::L2Squared { lambda, ell }, self.mode)
    }

    pub fn b(&self, f: &Field, k1: usize, k2: usize, lambda: f64, ell: f64) -> Result<f64> {
        Ok(self.b_pieces(f, k1, k2, lambda, ell)?.values().sum::<f64>().sqrt())
    }

    fn mixed(&self, f: &Field, k: usize, red: Reduction, dotted: bool) -> Result<f64> {
        check_order(k)?;
        let p = pieces(f, k, |m| a_q_max(k, m), red, self.mode)?;
        Ok(p.iter().filter(|(mq, _)| !dotted || **mq != (0, 0)).map(|(_, v)| v).sum())
    }

    pub fn c(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        self.mixed(f, k, Reduction::SupTxL2Y { ell }, false)
    }

    pub fn c_dot(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        self.mixed(f, k, Reduction::SupTxL2Y { ell }, true)
    }

    pub fn d(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        self.mixed(f, k, Reduction::L2TxSupY { ell }, false)
    }

    pub fn d_dot(&self, f: &Field, k: usize, ell: f64) -> Result<f64> {
        self.mixed(f, k, Reduction::L2TxSupY { ell }, true)
    }
}

pub fn norm_a(f: &Field, k: usize, ell: f64) -> Result<f64> {
    Norms::default().a(f, k, ell)
}

pub fn norm_a_dot(f: &Field, k: usize, ell: f64) -> Result<f64> {
    Norms::default().a_dot(f, k, ell)
}

pub fn norm_b(f: &Field, k1: usize, k2: usize, lambda: f64, ell: f64) -> Result<f64> {
    Norms::default().b(f, k1, k2, lambda, ell)
}

pub fn norm_c(f: &Field, k: usize, ell: f64) -> Result<f64> {
    Norms::default().c(f, k, ell)
}

pub fn norm_d(f: &Field, k: usize, ell: f64) -> Result<f64> {
    Norms::default().d(f, k, ell)
}

/// `max |<y>^ell f|` over the lattice.
pub fn norm_linf(f: &Field, ell: f64) -> f64 {
    let s = f.spec();
    let mut m = 0.0_f64;
    for i in 0..s.n_t {
        for j in 0..s.n_x {
            for (k, v) in f.line(i, j).iter().enumerate() {
                m = m.max(bracket(s.y(k)).powf(ell) * v.abs());
            }
        }
    }
    m
}

/// `||e^{-lambda t}<y>^ell f||_{L^inf_t(L^2_{xy})}`: the `B-tilde^{0,0}` norm.
pub fn norm_b_tilde_00(f: &Field, lambda: f64, ell: f64) -> f64 {
    let s = *f.spec();
    (0..s.n_t)
        .map(|i| (-lambda * s.t(i)).exp() * plane_l2(f.plane_data(i), s.n_y, s.dx(), s.dy(), ell))
        .fold(0.0, f64::max)
}

fn plane_l2(data: &[f64], n_y: usize, dx: f64, dy: f64, ell: f64) -> f64 {
    let mut acc = 0.0;
    for line in data.chunks(n_y) {
        for (k, v) in line.iter().enumerate() {
            let w = if k == 0 || k + 1 == n_y { 0.5 * dy } else { dy };
            let y = k as f64 * dy;
            acc += w * bracket(y).powf(2.0 * ell) * v * v;
        }
    }
    (acc * dx).sqrt()
}

/// `A^k_ell` of a `t`-independent function on the `(x, y)` half-plane; only
/// `x` counts as tangential.
pub fn plane_norm_a(p: &Plane, k: usize, ell: f64) -> Result<f64> {
    check_order(k)?;
    let mut acc = 0.0;
    for m in 0..=k {
        let base = p.derivative_n(Axis::X, m)?;
        for q in 0..=2 * (k - m) {
            let g = base.derivative_n(Axis::Y, q)?;
            acc += plane_l2(&g.data, g.n_y, g.dx(), g.dy(), ell).powi(2);
        }
    }
    Ok(acc.sqrt())
}

/// `||f g||_{A^k_ell} / (||f||_{A^k_ell} ||g||_inf + ||f||_inf ||g||_{A-dot^k_ell})`,
/// with `0/0` read as `0`.
pub fn morse_check(f: &Field, g: &Field, k: usize, ell: f64) -> Result<f64> {
    let n = Norms::default();
    let num = n.a(&f.mul(g), k, ell)?;
    let den = n.a(f, k, ell)? * g.max_abs() + f.max_abs() * n.a_dot(g, k, ell)?;
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

/// The aggregate `lambda_k` of a linearization background:
///
/// `||u~ - u^s||_{A^k_0} + ||u^s||_{C^k_0} + ||v~||_{D^k_0}
///  + ||eta_bar||_{C^k_0} + ||eta - eta_bar||_{A^k_0} + ||zeta||_{A^k_ell}`.
pub fn lambda_diagnostic(bg: &Background, k: usize, ell: f64) -> Result<f64> {
    lambda_diagnostic_terms(bg, k, ell).map(|t| t.iter().sum())
}

/// The six summands of [`lambda_diagnostic`], in order.
pub fn lambda_diagnostic_terms(bg: &Background, k: usize, ell: f64) -> Result<[f64; 6]> {
    let n = Norms::default();
    let shear = bg.shear();
    Ok([
        n.a(&bg.perturbation, k, 0.0)?,
        n.c(&shear.u_s, k, 0.0)?,
        n.d(&bg.v_tilde, k, 0.0)?,
        n.c(&bg.eta_bar, k, 0.0)?,
        n.a(&bg.eta.sub(&bg.eta_bar), k, 0.0)?,
        n.a(&bg.zeta, k, ell)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub k: usize,
    pub ell: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    pub value: f64,
}

/// Norm values of one field at one order, serialized as
/// `{"A": {"k": .., "ell": .., "value": ..}, ...}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    #[serde(flatten)]
    pub values: BTreeMap<String, NormEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_k_diag: Option<f64>,
}

impl NormReport {
    /// All norms of `f` at order `k`, weight `ell`; the `B` entry uses the
    /// split `(k1, k2) = (k, 0)` with damping `lambda`.
    pub fn compute(f: &Field, k: usize, ell: f64, lambda: f64, mode: TangentialIndexMode) -> Result<Self> {
        let n = Norms::new(mode);
        let entry = |value| NormEntry { k, ell, lambda: None, value };
        let mut values = BTreeMap::new();
        values.insert("A".into(), entry(n.a(f, k, ell)?));
        values.insert("B".into(), NormEntry { lambda: Some(lambda), ..entry(n.b(f, k, 0, lambda, ell)?) });
        values.insert("C".into(), entry(n.c(f, k, ell)?));
        values.insert("D".into(), entry(n.d(f, k, ell)?));
        values.insert("A_dot".into(), entry(n.a_dot(f, k, ell)?));
        values.insert("C_dot".into(), entry(n.c_dot(f, k, ell)?));
        values.insert("D_dot".into(), entry(n.d_dot(f, k, ell)?));
        values.insert("Linf_ell".into(), NormEntry { k: 0, ..entry(norm_linf(f, ell)) });
        Ok(NormReport { values, lambda_k_diag: None })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|e| e.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::new(1.0, 6.0, 1.0, 9, 8, 33).unwrap()
    }

    #[test]
    fn constant_field_a0() {
        let s = spec();
        let f = Field::constant(&s, 1.0);
        let v = norm_a(&f, 0, 0.0).unwrap();
        assert!((v - (s.t_final * s.l_x * s.y_max).sqrt()).abs() < 1e-12);
        assert!((norm_d(&f, 0, 0.0).unwrap() - (s.t_final * s.l_x).sqrt()).abs() < 1e-12);
        assert!((norm_c(&f, 0, 0.0).unwrap() - s.y_max.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn damping_cancels_growth() {
        let s = spec();
        let f = Field::from_fn(&s, |t, _, _| t.exp());
        let v = norm_b(&f, 0, 0, 1.0, 0.0).unwrap();
        assert!((v - (s.t_final * s.l_x * s.y_max).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn index_set_sizes() {
        let s = spec();
        let f = Field::from_fn(&s, |t, x, y| t + x.sin() + y * y);
        let p = Norms::default().a_pieces(&f, 2, 0.0).unwrap();
        // (0,0..4), (1,0..2), (2,0)
        assert_eq!(p.len(), 9);
    }

    #[test]
    fn max_per_order_is_below_sum() {
        let s = spec();
        let f = Field::from_fn(&s, |t, x, y| (t + 1.0) * (6.28 * x).sin() * (-y).exp());
        let all = Norms::new(TangentialIndexMode::AllMultiIndices).a(&f, 2, 1.0).unwrap();
        let max = Norms::new(TangentialIndexMode::MaxPerOrder).a(&f, 2, 1.0).unwrap();
        assert!(max <= all && max > 0.0);
    }

    #[test]
    fn rejects_high_order() {
        let f = Field::zeros(&spec());
        assert!(matches!(norm_a(&f, 4, 0.0), Err(Error::UnsupportedNormOrder { .. })));
    }

    #[test]
    fn report_round_trips_through_json() {
        let s = spec();
        let f = Field::from_fn(&s, |_, _, y| (-y).exp());
        let r = NormReport::compute(&f, 1, 1.0, 0.5, TangentialIndexMode::AllMultiIndices).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"A\":{\"k\":1"));
        let back: NormReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
