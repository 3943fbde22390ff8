//! Dataset I/O and orchestration: manifest ingest, the augmentation run,
//! histogram statistics and gaze-error evaluation.

pub mod eval;
pub mod manifest;
pub mod output;
pub mod run;
pub mod stats;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::camera::CameraError;
use crate::facemesh::MeshError;
use crate::geometry::GeometryError;
use crate::imaging::ImageError;
use crate::pnp::PnpError;

pub use eval::{evaluate, evaluate_files, EvalReport};
pub use manifest::{ingest_manifest, parse_manifest_line, Ingest, LineError, SampleRecord, SampleRecordLine};
pub use output::{AugmentedRecord, Channels, RunMetadata};
pub use run::{augment_dataset, augment_sample, preview_sample, AugmentOptions, RunSummary};
pub use stats::{stats, Histogram};

/// Why a single sample could not be augmented.
#[derive(Debug, Error)]
pub enum SampleError {
    #[error("image: {0}")]
    Image(#[from] ImageError),
    #[error("camera: {0}")]
    Camera(#[from] CameraError),
    #[error("pnp: {0}")]
    Pnp(#[from] PnpError),
    #[error("pnp did not converge (rms {rms:.3} px after {iterations} iterations)")]
    NotConverged { rms: f64, iterations: usize },
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("no valid records ({} invalid lines)", .0.len())]
    NoValidRecords(Vec<LineError>),
    #[error("{0} exists with different run parameters")]
    MetadataMismatch(PathBuf),
    #[error("{failed} of {attempted} samples failed")]
    TooManyFailures { failed: usize, attempted: usize },
    #[error("sample {0:?} not found")]
    UnknownSample(String),
    #[error("no sample ids in common between predictions and ground truth")]
    EmptyIntersection,
    #[error(transparent)]
    Params(#[from] AugmentError),
    #[error("face model: {0}")]
    Mesh(#[from] MeshError),
    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: SampleError,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line: None,
            message: err.to_string(),
        }
    }

    pub(crate) fn at_line(self, n: usize) -> Self {
        match self {
            Self::Parse { path, message, .. } => Self::Parse {
                path,
                line: Some(n),
                message,
            },
            other => other,
        }
    }
}
