use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("missing blob `{name}` ({path})")]
    MissingBlob { name: String, path: PathBuf },

    #[error("shape mismatch for `{name}`: manifest declares {expected} values, found {found}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("frame times are not strictly increasing at frame {frame}")]
    NonMonotoneTimes { frame: usize },

    #[error("node index {index} out of range in element {element} (mesh has {n_nodes} nodes)")]
    IndexOutOfRange {
        element: usize,
        index: usize,
        n_nodes: usize,
    },

    #[error("element {element} repeats node {node}")]
    RepeatedNode { element: usize, node: usize },

    #[error("non-manifold mesh: face {face:?} is shared by {count} elements")]
    NonManifold { face: [usize; 4], count: usize },

    #[error("node {node} has no incident element")]
    OrphanNode { node: usize },

    #[error("node {node} is isolated in the node graph")]
    IsolatedNode { node: usize },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("channel mismatch: statistics cover {expected} components, data has {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("normalization statistics do not match the checkpoint")]
    StatsMismatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// True for errors caused by non-finite numerics rather than bad data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Divergence { .. })
    }
}
