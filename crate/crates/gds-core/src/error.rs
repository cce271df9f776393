//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GdsError {
    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("site {site:?} outside window")]
    OutsideWindow { site: [i64; 3] },

    #[error("missing neighbor: site {site:?} touches the window edge and no extension rule was given")]
    MissingNeighbor { site: [i64; 3] },

    #[error("toppling outside confining ball: site {site:?} has |x| = {norm} >= R = {r}")]
    TopplingOutsideBall { site: [i64; 3], norm: f64, r: f64 },

    #[error("inadmissible mass configuration: total positive mass {m_plus} exceeds total negative mass {m_minus}")]
    Inadmissible { m_plus: f64, m_minus: f64 },

    #[error("max rounds ({max_rounds}) exceeded; residual {residual} (stop_tol {stop_tol}) after {topplings} topplings")]
    MaxRoundsExceeded {
        max_rounds: u64,
        residual: f64,
        stop_tol: f64,
        topplings: u64,
    },

    #[error("kernel radius {radius} too small: offset {needed} required")]
    KernelRadiusTooSmall { radius: i64, needed: i64 },

    #[error("dimension mismatch: kernel is {kernel_d}D with spacing {kernel_xi}, grid is {grid_d}D with spacing {grid_xi}")]
    KernelMismatch {
        kernel_d: usize,
        kernel_xi: f64,
        grid_d: usize,
        grid_xi: f64,
    },

    #[error("obstacle solver did not converge: residual {residual} > tol {tol} after {iterations} sweeps")]
    NonConvergence {
        residual: f64,
        tol: f64,
        iterations: u64,
    },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("unsupported scenario shape: {0}")]
    UnsupportedScenario(String),

    #[error("scenario validation failed: {0}")]
    InvalidScenario(String),

    #[error("convergence regression in scaling study: {0}")]
    ConvergenceRegression(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GdsError>;
