//! File formats, a parallel experiment harness and the `wcec` command line
//! tool on top of [`wcec_core`].

use std::path::{Path, PathBuf};

use wcec_core::bench::{ExperimentError, FirError};
use wcec_core::energy::{FitError, ModelError};
use wcec_core::isa::ParseError;
use wcec_core::sim::SimError;
use wcec_core::wcec::WcecError;
use wcec_core::CfgError;

pub mod cli;
pub mod harness;
pub mod model_file;
pub mod reports;
pub mod tables;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Cfg(#[from] CfgError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("{0}")]
    Fir(#[from] FirError),
    #[error("{0}")]
    Wcec(#[from] WcecError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// 2 for malformed input of any kind, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Sim(_) | Error::Experiment(_) | Error::Fit(_) => 1,
            _ => 2,
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.to_owned(), source })
}
