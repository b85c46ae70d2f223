//! Numerical laboratory for the two-dimensional Prandtl boundary-layer system
//!
//! ```text
//! u_t + u u_x + v u_y - u_yy = 0,   u_x + v_y = 0,
//! u|_{y=0} = v|_{y=0} = 0,          u -> 1 as y -> inf,
//! ```
//!
//! on `[0,T] x T_x x [0,Y]`, built around monotone shear flows and a
//! Nash–Moser–Hörmander iteration for small perturbations of them.
//!
//! The crate is layered bottom-up:
//!
//! * [`grid`] — lattice fields, finite differences and quadrature;
//! * [`norms`] — weighted anisotropic Sobolev functionals;
//! * [`shear_flow`] — heat-kernel shear profiles and their diagnostics;
//! * [`mollifier`] — shifted smoothing operators `S_theta`;
//! * [`linearized`] — the transformed linearized solver and energy probes;
//! * [`nash_moser`] — the smoothed Newton iteration and its monitors;
//! * [`oracle`] — a direct Picard solver used as an independent reference.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod linearized;
pub mod mollifier;
pub mod nash_moser;
pub mod norms;
pub mod oracle;
pub mod quadrature;
pub mod shear_flow;

pub use error::{Error, Result};
pub use grid::{Axis, BoundaryMeta, Field, GridSpec, Measure, Plane};
