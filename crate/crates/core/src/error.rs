use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("{what} overflows the floating-point range; use the log-scale variant")]
    Overflow { what: &'static str },

    #[error("adaptive quadrature did not converge (estimated error {estimate:e})")]
    Quadrature { estimate: f64 },

    #[error("bracket expansion exceeded its cap at y = {reached}")]
    BracketExceeded { reached: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dyadic shell {k} outside the representable range [{lo}, {hi}]")]
    ShellOutOfRange { k: i32, lo: i32, hi: i32 },

    #[error("backward amplification overflows at |xi| = {xi}; truncate at a radius below {radius}")]
    AmplificationOverflow { xi: f64, radius: f64 },

    #[error("linear solve stagnated: relative residual {residual:e} after {iterations} iterations")]
    SolverStagnation { residual: f64, iterations: usize },

    #[error("no paraproduct order m <= {m_max} is positive on the test set (worst margin {worst_margin:e})")]
    NoPositiveOrder { m_max: usize, worst_margin: f64 },

    #[error("coefficient family is not elliptic: smallest Rayleigh quotient {0}")]
    Degenerate(f64),

    #[error("non-finite energy ratio in run {run} at s = {s}")]
    NonFiniteRatio { run: usize, s: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
