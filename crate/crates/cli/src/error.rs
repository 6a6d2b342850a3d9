use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] diffnet_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(e) if is_config_like(e) => 2,
            CliError::Numerical(_) => 3,
            CliError::Config(_) | CliError::Io { .. } => 2,
        }
    }
}

/// Core errors that stem from invalid input rather than numerics.
fn is_config_like(e: &diffnet_core::Error) -> bool {
    use diffnet_core::Error::*;
    matches!(
        e,
        InvalidSizes(_)
            | InvalidTopology(_)
            | ConnectivityUnreachable { .. }
            | NonPositiveVariance { .. }
            | DimensionMismatch(_)
    )
}

pub type CliResult<T> = Result<T, CliError>;
