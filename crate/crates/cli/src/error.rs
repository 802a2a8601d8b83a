use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] pettis_core::Error),
}

impl CliError {
    /// 2 for configuration, precondition and I/O problems; 1 when a
    /// computation itself broke an exact gate.
    pub fn exit_code(&self) -> i32 {
        use pettis_core::Error as E;
        match self {
            CliError::Core(E::PettisViolation { .. } | E::Numeric(_)) => 1,
            _ => 2,
        }
    }
}
