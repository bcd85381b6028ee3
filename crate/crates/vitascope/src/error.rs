use thiserror::Error;

#[derive(Debug, Error)]
pub enum VitaError {
    #[error(transparent)]
    Ndiff(#[from] ndiff::NdiffError),

    #[error(transparent)]
    Geom(#[from] geom::GeomError),

    #[error("unreachable scene: {detail}")]
    UnreachableScene { detail: String },

    #[error("inconsistent scene: {detail}")]
    InconsistentScene { detail: String },

    #[error("no intrinsic contact: {detail}")]
    EmptyTactile { detail: String },

    #[error("training diverged at epoch {epoch}, interaction {interaction}: {detail}")]
    Training {
        epoch: usize,
        interaction: usize,
        detail: String,
    },

    #[error("inference failed: {detail}")]
    Inference { detail: String },

    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("dataset error at {path}: {detail}")]
    Dataset { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, VitaError>;
