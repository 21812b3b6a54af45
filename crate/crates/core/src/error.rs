use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A field was NaN/infinite or outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parameters lie in a regime where the requested quantity is undefined
    /// (e.g. thermal coefficients with lambda <= mu).
    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    /// Degenerate data that cannot produce a valid model (e.g. all coupling
    /// amplitudes zero, or a nonpositive dissipation rate).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The drift is not asymptotically stable, so no stationary state exists.
    #[error("no stationary state: lambda^2 + omega^2 - mu^2 = {discriminant:.6e} <= 0")]
    NoStationaryState { discriminant: f64 },

    /// The closed-form constant solve is singular at critical damping.
    #[error("degenerate regime: {0}")]
    DegenerateRegime(String),

    /// The requested closed form is only available in the underdamped regime.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// The point-source solution is singular at t = 0.
    #[error("singular initial condition: {0}")]
    SingularInitialCondition(String),

    /// The coherent-representation distribution does not exist as an
    /// ordinary positive function for these parameters/times.
    #[error("P representation unavailable: {0}")]
    PRepresentationUnavailable(String),

    /// The Gaussian integral behind the generating function diverges.
    #[error("generating function diverged: {0}")]
    GenFunctionDiverged(String),

    /// The truncated basis is too small for the run: either the trace
    /// drifted or the top level picked up real population.
    #[error("truncation breach: health figure {drift:.3e} at dim {dim}; increase the basis size")]
    TruncationBreach { drift: f64, dim: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
