use thiserror::Error;

/// Failures of a subcommand, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invariant failed: {0}")]
    Invariant(String),
    #[error(transparent)]
    Core(backheat::Error),
}

impl From<backheat::Error> for CliError {
    fn from(e: backheat::Error) -> Self {
        match e {
            backheat::Error::Empty(what) => Self::Empty(what.to_string()),
            backheat::Error::DegenerateFit(msg) => Self::DegenerateFit(msg),
            other => Self::Core(other),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_DEGENERATE_FIT: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Empty(_) => EXIT_EMPTY,
            Self::DegenerateFit(_) => EXIT_DEGENERATE_FIT,
            Self::Invariant(_) | Self::Core(_) => EXIT_INVARIANT,
        }
    }

    /// Core errors raised while validating inputs count as configuration errors.
    pub(crate) fn in_config(e: backheat::Error) -> Self {
        match CliError::from(e) {
            Self::Core(e) => Self::Config(e.to_string()),
            other => other,
        }
    }
}
