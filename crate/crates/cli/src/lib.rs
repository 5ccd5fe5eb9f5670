//! Batch rendering and scaling benchmarks.

pub mod bench;
pub mod render;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cpcp_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid --bins value `{0}`")]
    InvalidBins(String),
    #[error("output must end in .svg or .json, got `{0}`")]
    UnsupportedOutput(PathBuf),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("bundle count differs across row counts: {0:?}")]
    BundleCountVaries(Vec<usize>),
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Core(e) => e.name(),
            Self::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "InputNotFound"
            }
            Self::Io { .. } => "Io",
            Self::InvalidBins(_) => "InvalidBins",
            Self::UnsupportedOutput(_) => "UnsupportedOutput",
            Self::InvalidArgument(_) => "InvalidArgument",
            Self::BundleCountVaries(_) => "BundleCountVaries",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Core(e.into())
            }
        }
    )*};
}

from_core!(
    cpcp_core::IngestError,
    cpcp_core::ModelError,
    cpcp_core::BinningError,
    cpcp_core::BundlingError
);
