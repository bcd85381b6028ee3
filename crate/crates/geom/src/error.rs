use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("mesh is not watertight: {detail}")]
    NotWatertight { detail: String },

    #[error("empty mesh where a nonempty one is required")]
    EmptyMesh,

    #[error("empty point cloud where a nonempty one is required")]
    EmptyPointCloud,

    #[error("degenerate geometry in {op}: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("reconstruction produced an empty level set")]
    EmptyLevelSet,

    #[error("i/o error at {path}: {detail}")]
    Io { path: String, detail: String },

    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, GeomError>;
