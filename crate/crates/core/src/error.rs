use thiserror::Error;

use crate::bvh::BvhError;
use crate::rotation::RotationError;
use crate::skeleton::ValidationReport;

impl Error {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(ValidationReport),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("frame {frame}, joint {joint}: {source}")]
    Decode {
        frame: usize,
        joint: usize,
        #[source]
        source: RotationError,
    },
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error("no unmasked joints")]
    EmptyMask,
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("reference frame is inconsistent with the skeleton: joint {joint} off by {error:.3e}")]
    InconsistentReference { joint: usize, error: f64 },
    #[error("joint {joint}: reference bone has zero length but the pose bone does not")]
    ZeroReferenceBone { joint: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error("unsupported channel set on joint '{joint}': {detail}")]
    UnsupportedChannels { joint: String, detail: String },
    #[error("clip file: {0}")]
    ClipFormat(String),
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
