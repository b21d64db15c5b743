use thiserror::Error;

/// Errors raised by the solvers.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// failing computation ran in.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("zero pivot in tridiagonal elimination at row {row}")]
    ZeroPivot { row: usize },

    #[error("tridiagonal solve residual {residual:e} exceeds the admissible bound")]
    Residual { residual: f64 },

    #[error("eigenvalue {index} did not converge")]
    EigenNoConvergence { index: usize },

    #[error("positivity violated: eigenvalue {weight:e} of a density operator")]
    Positivity { weight: f64 },

    #[error("density must be strictly positive (entry {index} is {value:e})")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("functional evaluation is not finite (max |A| = {max_abs_a:e})")]
    NonFiniteFunctional { max_abs_a: f64 },

    #[error("degenerate search direction")]
    DegenerateDirection,

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("minimizer did not converge after {iterations} iterations (relative step {relative_step:e})")]
    NotConverged { iterations: usize, relative_step: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("solver failed at step {step} (t = {time}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize, time: f64) -> Self {
        Error::AtStep { step, time, source: Box::new(self) }
    }

    /// True when the error ultimately comes from a solver failing to converge.
    pub fn is_convergence_failure(&self) -> bool {
        match self {
            Error::AtStep { source, .. } => source.is_convergence_failure(),
            Error::NotConverged { .. }
            | Error::EigenNoConvergence { .. }
            | Error::LineSearch(_)
            | Error::NonFiniteFunctional { .. }
            | Error::Positivity { .. }
            | Error::NonPositiveDensity { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
