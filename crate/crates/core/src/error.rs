use thiserror::Error;

use crate::grid::Axis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid specs differ between operands")]
    GridMismatch,

    #[error("derivative order {0} is not supported (max 2)")]
    UnsupportedOrder(usize),

    #[error("axis {axis:?} has {n} samples, stencil needs at least {need}")]
    StencilTooWide { axis: Axis, n: usize, need: usize },

    #[error("norm order k = {k} exceeds the supported maximum {max}")]
    UnsupportedNormOrder { k: usize, max: usize },

    #[error("non-finite sample produced by {0}")]
    NonFinite(&'static str),

    /// The monotone (Oleinik) gate: `d_y u` must be positive at every node.
    #[error("monotonicity violated at t = {t}, x = {x}, y = {y} (d_y u = {value:e})")]
    NonMonotone { t: f64, x: f64, y: f64, value: f64 },

    #[error("transport CFL number {courant:.3} exceeds 0.9; reduce the time step")]
    Cfl { courant: f64 },

    #[error("Robin boundary row is singular (pivot {pivot:e})")]
    RobinSingular { pivot: f64 },

    #[error("Picard iteration did not converge at time step {step} (increment {increment:e})")]
    PicardDiverged { step: usize, increment: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True when the method has left its validity regime (monotonicity, CFL,
    /// Picard) rather than being handed bad input.
    pub fn is_numerical_gate(&self) -> bool {
        matches!(
            self,
            Error::NonMonotone { .. }
                | Error::Cfl { .. }
                | Error::RobinSingular { .. }
                | Error::PicardDiverged { .. }
                | Error::NonFinite(_)
        )
    }
}
