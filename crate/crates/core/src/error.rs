use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the embedding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("meta-path parse error: {0}")]
    Parse(String),

    #[error("connectivity error: no edges connect {0} and {1}")]
    Connectivity(String, String),

    #[error("MPU {0} is not present in the graph")]
    MissingMpu(String),

    #[error("MPU {0} has no trained embeddings in the store")]
    UntrainedMpu(String),

    #[error("node {0} does not appear in any MPU")]
    NodeNotInStore(usize),

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("loss became NaN at epoch {epoch}, batch {batch} (max |grad| = {max_grad})")]
    NanLoss { epoch: usize, batch: usize, max_grad: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
