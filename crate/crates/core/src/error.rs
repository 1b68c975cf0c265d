use std::path::PathBuf;

/// Errors produced by the geometry kernel.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("empty point set")]
    EmptyPointSet,

    #[error("missing normals")]
    MissingNormals,

    #[error("open mesh")]
    OpenMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {path} at byte {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
