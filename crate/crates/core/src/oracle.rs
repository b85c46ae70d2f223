//! Direct nonlinear Prandtl solver, used as an independent check on the
//! Nash–Moser output.
//!
//! The unknown is the perturbation `p = u - u^s` with `p = 0` at the wall
//! and at `y = Y` (far field `u(Y) = u^s(t, Y)`). Each time step solves
//!
//! ```text
//! (p_i - p_{i-1})/dt + (u^s + p_i) D_x p_i + v_i (d_y u^s + D_y p_i) - D_yy p_i = s_i,
//! v_i = -int_0^y D_x p_i,
//! ```
//!
//! by Picard iteration: the transport speed and `v` are frozen at the current
//! iterate, diffusion and `v D_y` are implicit, and the backward `x`
//! difference is swept Gauss–Seidel style across the periodic direction, so
//! the upstream neighbour is always the freshest available column. At
//! convergence the step satisfies the same discrete operator as
//! [`crate::nash_moser::prandtl_operator`] with [`Scheme::Upwind`](crate::nash_moser::Scheme).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Field, Plane};
use crate::linearized::thomas;
use crate::shear_flow::ShearFlow;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    pub picard_max: usize,
    /// Relative max-norm increment at which Picard stops.
    pub picard_tol: f64,
    /// Largest admissible `max|u| dt / dx`.
    pub cfl_safety: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { picard_max: 8, picard_tol: 1e-10, cfl_safety: 0.9 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.picard_max == 0 {
            return Err(Error::InvalidArgument("picard_max must be >= 1".into()));
        }
        if !(self.picard_tol > 0.0) || !(self.cfl_safety > 0.0) {
            return Err(Error::InvalidArgument("picard_tol and cfl_safety must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Full velocity `u^s + p`.
    pub u: Field,
    pub v: Field,
    /// Perturbation `p = u - u^s`.
    pub p: Field,
    /// Picard sweeps used per time step (index 0 is the initial slab).
    pub picard_iterations: Vec<usize>,
    /// `min d_y u` over the lattice, with its node.
    pub min_dy_u: (usize, usize, usize, f64),
}

fn minus_cumint_dx(p: &[f64], template: &Plane) -> Result<Plane> {
    let mut plane = template.clone();
    plane.data.copy_from_slice(p);
    let mut v = plane.derivative(Axis::X, 1)?.cumulative_integral_y().scale(-1.0);
    for j in 0..v.n_x {
        v.data[j * v.n_y] = 0.0;
    }
    Ok(v)
}

/// March the nonlinear problem from `u0_tilde` (the perturbation at `t = 0`).
pub fn solve_nonlinear(u0_tilde: &Plane, shear: &ShearFlow, cfg: &OracleConfig) -> Result<OracleSolution> {
    solve_nonlinear_forced(u0_tilde, shear, cfg, None)
}

/// As [`solve_nonlinear`], with a right-hand side `s` (used for manufactured
/// solutions).
pub fn solve_nonlinear_forced(
    u0_tilde: &Plane,
    shear: &ShearFlow,
    cfg: &OracleConfig,
    source: Option<&Field>,
) -> Result<OracleSolution> {
    cfg.validate()?;
    let s = *shear.spec();
    if u0_tilde.n_x != s.n_x || u0_tilde.n_y != s.n_y {
        return Err(Error::GridMismatch);
    }
    if let Some(src) = source {
        if *src.spec() != s {
            return Err(Error::GridMismatch);
        }
    }
    let (nx, ny) = (s.n_x, s.n_y);
    let (dt, dx, dy) = (s.dt(), s.dx(), s.dy());
    let mut p = Field::zeros(&s);
    let mut v = Field::zeros(&s);
    p.plane_data_mut(0).copy_from_slice(&u0_tilde.data);
    for j in 0..nx {
        let line = p.line_mut(0, j);
        line[0] = 0.0;
        line[ny - 1] = 0.0;
    }
    let template = Plane::zeros_like(&s);
    let v0 = minus_cumint_dx(p.plane_data(0), &template)?;
    v.plane_data_mut(0).copy_from_slice(&v0.data);

    let mut picard_iterations = vec![0];
    let (mut lo, mut di, mut up) = (vec![0.0; ny], vec![0.0; ny], vec![0.0; ny]);
    let mut scratch = vec![0.0; ny];
    for i in 1..s.n_t {
        let us = shear.row(0, i);
        let g = shear.row(1, i);
        let prev = p.plane_data(i - 1).to_vec();
        // Linear extrapolation in time as the first iterate.
        let mut iter = if i >= 2 {
            prev.iter().zip(p.plane_data(i - 2)).map(|(a, b)| 2.0 * a - b).collect()
        } else {
            prev.clone()
        };
        let mut converged = false;
        let mut increment = f64::INFINITY;
        let mut used = 0;
        for m in 0..cfg.picard_max {
            used = m + 1;
            let courant = (0..nx * ny).map(|n| (us[n % ny] + iter[n]).abs()).fold(0.0, f64::max) * dt / dx;
            if courant > cfg.cfl_safety {
                return Err(Error::Cfl { courant });
            }
            let old = iter.clone();
            let mut vcol = vec![0.0; ny];
            for j in 0..nx {
                let jm = (j + nx - 1) % nx;
                let jp = (j + 1) % nx;
                // v at column j from the freshest neighbours (trapezoid in y).
                vcol[0] = 0.0;
                let dxc = |k: usize| (iter[jp * ny + k] - iter[jm * ny + k]) / (2.0 * dx);
                for k in 1..ny {
                    vcol[k] = vcol[k - 1] - 0.5 * dy * (dxc(k - 1) + dxc(k));
                }
                let mut rhs: Vec<f64> = vec![0.0; ny];
                for k in 1..ny - 1 {
                    let n = j * ny + k;
                    let a = us[k] + iter[n];
                    let vv = vcol[k];
                    lo[k] = -1.0 / (dy * dy) - vv / (2.0 * dy);
                    up[k] = -1.0 / (dy * dy) + vv / (2.0 * dy);
                    di[k] = 1.0 / dt + a / dx + 2.0 / (dy * dy);
                    rhs[k] = prev[n] / dt + a * iter[jm * ny + k] / dx - vv * g[k];
                    if let Some(src) = source {
                        rhs[k] += src.get(i, j, k);
                    }
                }
                di[0] = 1.0;
                up[0] = 0.0;
                rhs[0] = 0.0;
                di[ny - 1] = 1.0;
                lo[ny - 1] = 0.0;
                rhs[ny - 1] = 0.0;
                thomas(&lo, &di, &up, &mut rhs, &mut scratch);
                iter[j * ny..(j + 1) * ny].copy_from_slice(&rhs);
            }
            if iter.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("nonlinear oracle"));
            }
            increment = iter.par_iter().zip(&old).map(|(a, b)| (a - b).abs()).reduce(|| 0.0, f64::max);
            let scale = iter.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            if increment <= cfg.picard_tol * scale || increment == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDiverged { step: i, increment });
        }
        picard_iterations.push(used);
        let vi = minus_cumint_dx(&iter, &template)?;
        p.plane_data_mut(i).copy_from_slice(&iter);
        v.plane_data_mut(i).copy_from_slice(&vi.data);
    }
    let mut v = v;
    v = v.with_meta(crate::grid::BoundaryMeta { vanishes_at_wall: true, far_field: None });
    let u = shear.u_s.add(&p);
    let min_dy_u = u.derivative(Axis::Y, 1)?.argmin();
    log::debug!("oracle: max Picard sweeps {}", picard_iterations.iter().max().unwrap_or(&0));
    Ok(OracleSolution { u, v, p, picard_iterations, min_dy_u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::nash_moser::{default_perturbation, prandtl_operator, residual_norm, Scheme};
    use crate::shear_flow::ShearProfile;

    #[test]
    fn zero_perturbation_stays_zero() {
        let spec = GridSpec::new(0.25, 10.0, 1.0, 9, 8, 41).unwrap();
        let shear = ShearFlow::solve_heat_kernel(ShearProfile::erf_canonical(), &spec).unwrap();
        let sol = solve_nonlinear(&default_perturbation(&spec, 0.0), &shear, &OracleConfig::default()).unwrap();
        assert_eq!(sol.p.max_abs(), 0.0);
        assert_eq!(sol.v.max_abs(), 0.0);
    }

    #[test]
    fn converged_steps_satisfy_the_discrete_operator() {
        let spec = GridSpec::new(0.25, 10.0, 1.0, 17, 16, 61).unwrap();
        let shear = ShearFlow::solve_heat_kernel(ShearProfile::erf_canonical(), &spec).unwrap();
        let sol = solve_nonlinear(&default_perturbation(&spec, 0.01), &shear, &OracleConfig::default()).unwrap();
        let r = prandtl_operator(&shear, &sol.p, &sol.v, Scheme::Upwind).unwrap();
        let scale = residual_norm(&sol.p.derivative(Axis::Y, 2).unwrap(), 1.0).unwrap();
        assert!(residual_norm(&r, 1.0).unwrap() < 1e-8 * scale);
        assert!(sol.picard_iterations.iter().all(|&m| m <= 8));
    }

    #[test]
    fn picard_cap_is_reported() {
        let spec = GridSpec::new(0.25, 10.0, 1.0, 9, 8, 41).unwrap();
        let shear = ShearFlow::solve_heat_kernel(ShearProfile::erf_canonical(), &spec).unwrap();
        let cfg = OracleConfig { picard_max: 1, ..OracleConfig::default() };
        let err = solve_nonlinear(&default_perturbation(&spec, 0.01), &shear, &cfg).unwrap_err();
        assert!(matches!(err, Error::PicardDiverged { step: 1, .. }));
    }
}
