use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },

    #[error(transparent)]
    Model(#[from] ringwave_core::Error),
}

impl CliError {
    /// 2 for bad input, 3 when a solver fails, 1 for I/O trouble on output.
    pub fn exit_code(&self) -> u8 {
        use ringwave_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Read { .. } => 2,
            CliError::Write { .. } => 1,
            CliError::Model(E::NumericFailure { .. } | E::UndefinedPhase | E::WindowTooShort { .. }) => 3,
            CliError::Model(_) => 2,
        }
    }
}
