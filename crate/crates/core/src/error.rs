use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Argument outside the domain of an operation (x < 0, h <= 0, sigma = 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Grid too coarse for the oscillation scale of the problem.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Spectral parameter outside the region where the continuation is valid.
    #[error("strip error: Im(lambda/h) = {im_sigma:.6} must exceed {bound:.6}")]
    Strip { im_sigma: f64, bound: f64 },

    #[error("integrator failed to meet tolerance at x = {x:.6} ({reason})")]
    Stiffness { x: f64, reason: String },

    #[error("lambda = {lambda} is too close to a resonance (|W| = {w_abs:.3e} < {threshold:.3e})")]
    NearResonance { lambda: Complex64, w_abs: f64, threshold: f64 },

    #[error("zero of the function suspected near the contour at {at}")]
    BoundaryZero { at: Complex64 },

    #[error("contour integral did not settle to an integer (raw = {raw:.6}, samples = {samples})")]
    NonInteger { raw: f64, samples: usize },

    #[error("non-finite function value at {at}")]
    NonFinite { at: Complex64 },

    #[error("zero search diverged; best estimate {best} (|f| = {residual:.3e})")]
    Divergence { best: Complex64, residual: f64 },

    #[error("function vanishes at the disk center {center}")]
    ZeroAtCenter { center: Complex64 },

    #[error("zero list incomplete: winding count {winding}, listed {listed}")]
    Completeness { winding: i64, listed: usize },

    #[error("pole order {order} exceeds winding count {winding} on the isolating circle")]
    Isolation { order: usize, winding: i64 },

    #[error("cutoff at x = {x_cut} sees eigenfunction amplitude {amplitude:.3e} (limit {limit:.1e})")]
    BadCutoff { x_cut: f64, amplitude: f64, limit: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),
}
