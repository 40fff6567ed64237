//! Error type shared across the library.

use thiserror::Error;

/// Errors raised by model construction, synthesis, fitting, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{name}` is not symmetric: relative asymmetry {asymmetry:.3e} exceeds {tol:.3e}")]
    NonSymmetric {
        name: &'static str,
        asymmetry: f64,
        tol: f64,
    },

    #[error("matrix `{name}` is not positive (semi)definite: eigenvalue {eigenvalue:.3e}")]
    NotPositive { name: &'static str, eigenvalue: f64 },

    #[error("damping is not proportional: off-diagonal mass {off_diag:.3e} exceeds {tol:.3e} of diagonal")]
    NonProportionalDamping { off_diag: f64, tol: f64 },

    #[error("eigenvalue solve failed: {0}")]
    EigSolveFailure(String),

    #[error("rank-deficient {what}: condition number {cond:.3e} exceeds {max_cond:.3e}")]
    RankDeficient {
        what: &'static str,
        cond: f64,
        max_cond: f64,
    },

    #[error("scheduling point ({x}, {y}) lies outside the workspace [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]")]
    OutOfWorkspace {
        x: f64,
        y: f64,
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
    },

    #[error("discarded mode {index} has zero eigenfrequency; its block is singular")]
    SingularDiscardedBlock { index: usize },

    #[error("non-finite result in {0}")]
    NonFinite(&'static str),

    #[error("pair (A, C) appears undetectable: {0}")]
    NotDetectable(String),

    #[error("ill-conditioned solve in {what}: condition estimate {cond:.3e}")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("observer synthesis failed at grid point {index} ({x}, {y}): {source}")]
    SynthesisAt {
        index: usize,
        x: f64,
        y: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("sequence length mismatch: {0}")]
    LengthMismatch(String),

    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),

    #[error("filter center {freq_hz} Hz is at or above the Nyquist frequency {nyquist_hz} Hz")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },

    #[error("actuation map is rank deficient on the controlled mode set (rank {rank} < {needed})")]
    RankDeficientActuation { rank: usize, needed: usize },

    #[error("motion limits are infeasible: {0}")]
    InfeasibleLimits(String),

    #[error("sampling time mismatch: {what} designed at {expected} s, loop runs at {got} s")]
    TsMismatch {
        what: &'static str,
        expected: f64,
        got: f64,
    },

    #[error("non-finite state at tick {tick} (t = {t} s) in {what}")]
    NonFiniteState {
        tick: usize,
        t: f64,
        what: &'static str,
    },

    #[error("analysis window of {window} s is too long for a trace of {available} s")]
    WindowTooLong { window: f64, available: f64 },

    #[error("segment too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("empty frequency band [{lo} Hz, {hi} Hz] on the given grid")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the grid point at which bank synthesis failed.
    pub fn at_grid_point(self, index: usize, x: f64, y: f64) -> Error {
        Error::SynthesisAt {
            index,
            x,
            y,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
