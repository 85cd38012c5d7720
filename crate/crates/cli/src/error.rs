use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] spar_opf::Error),
}

/// Process exit codes.
pub mod code {
    pub const OK: u8 = 0;
    /// Command-line usage error (clap uses the same code).
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const INPUT: u8 = 4;
    pub const SOLVER: u8 = 5;
    pub const INFEASIBLE: u8 = 6;
    pub const REFUSED: u8 = 7;
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        use spar_opf::Error as E;
        match self {
            CliError::Config(_) => code::CONFIG,
            CliError::Io { .. } => code::INPUT,
            CliError::Core(e) => match e {
                E::Domain(_) | E::Parameter(_) => code::CONFIG,
                E::Ingestion(_) | E::Io(_) | E::Json(_) | E::Csv(_) => code::INPUT,
                E::Construction(_) | E::Solver(_) => code::SOLVER,
                E::Infeasible(_) => code::INFEASIBLE,
                E::Refused(_) => code::REFUSED,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
