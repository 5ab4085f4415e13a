//! Command layer behind the `hrburst` binary: configuration, the seven
//! subcommands and their file artifacts.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{run, Command, Report};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// Process exit status: 2 for configuration and output problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numerical(e.to_string())
            }
        })*
    };
}

numerical!(
    hrburst::OrbitError,
    hrburst::IntegrateError,
    hrburst::adjoint::AdjointError,
    hrburst::bifurcation::BifurcationError,
    hrburst::direct::DirectError,
    hrburst::isochron::IsochronError
);

impl From<hrburst::export::ExportError> for CliError {
    fn from(e: hrburst::export::ExportError) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
