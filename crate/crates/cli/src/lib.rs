//! Configuration loading and the subcommands behind the `lodempc` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::{ExperimentConfig, OUTPUT_DIR_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Model(lodempc::Error),

    #[error("numerical failure: {0}")]
    Numerical(lodempc::Error),

    #[error("output error: {0}")]
    Output(String),
}

impl From<lodempc::Error> for CliError {
    fn from(e: lodempc::Error) -> Self {
        use lodempc::Error as E;
        match e {
            E::Factorization { .. } | E::PlantDivergence { .. } | E::EmptyTrajectory => {
                CliError::Numerical(e)
            }
            E::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Model(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl CliError {
    /// 1 for anything wrong with the inputs, 2 when the numerics gave out.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}
