use std::path::PathBuf;

use thiserror::Error;

use crate::graph::{EdgeId, NodeId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node: {0}")]
    InvalidNode(String),

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("edge endpoint {0} does not exist")]
    DanglingEndpoint(NodeId),

    #[error("supports edge {src} -> {dst} would create a cycle")]
    SupportCycle { src: NodeId, dst: NodeId },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("voxel resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(f64, f64),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("stale match result: {0}")]
    StaleMatch(String),

    #[error("infeasible scene spec: {0}")]
    InfeasibleScene(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numerics (non-finite values, divergence)
    /// rather than by malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }
}
