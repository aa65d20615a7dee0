use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("mode dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("Fock truncation too small: need dim >= {needed}, have {dim}")]
    Truncation { needed: usize, dim: usize },
    #[error("cannot combine operators with states in one tensor product")]
    KindMismatch,
    #[error("mode index {index} out of range for {modes} modes")]
    Index { index: usize, modes: usize },
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("flux branch is multi-valued for beta_J = {0:.4} >= 1/2")]
    MultiValuedFlux(f64),
    #[error("no sweet spot for beta_J = {0:.4} >= 1/sqrt(2)")]
    NoSweetSpot(f64),
    #[error("omega_b - 2 omega_m does not change sign on the sweep")]
    NoCrossing,
    #[error("root finding or iteration did not converge: {0}")]
    Convergence(String),

    #[error("adaptive step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepFailure { t: f64, h: f64 },
    #[error("steady state is not unique: {0}")]
    DegenerateNull(String),
    #[error("eigen solver failed: {0}")]
    EigenFailure(String),

    #[error("fit is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("no oscillation detected: {0}")]
    NoOscillation(String),
    #[error("division by zero: {0}")]
    DivByZero(&'static str),
    #[error("x and y contractions differ: {cx:.4} vs {cy:.4}")]
    InconsistentContraction { cx: f64, cy: f64 },
    #[error("fixed-point iteration did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("no stabilized cat: |Delta_m| exceeds threshold {threshold:.4e} rad/s")]
    NoStabilization { threshold: f64 },

    #[error("total dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("eigenstate labels are ambiguous: {0}")]
    LabelAmbiguity(String),
}
