use thiserror::Error;

use crate::dataio::DataError;
use crate::fusion::FusionError;
use crate::metrics::MetricsError;
use crate::seqmodel::ModelError;
use crate::svr::SvrError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("experiment {id}: {source}")]
    Experiment {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_experiment(self, id: &str) -> Self {
        Error::Experiment {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
