use std::path::PathBuf;

use thiserror::Error;

use crate::model::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Label values that are not part of the dataset's label schema.
    #[error("schema violation: label values {values:?} are not in the schema{}", context_suffix(.context))]
    SchemaViolation { values: Vec<i64>, context: String },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: Shape,
        found: Shape,
    },

    #[error("dataset inconsistency: {0}")]
    DatasetInconsistency(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("centroid of an empty mask is undefined")]
    EmptyMask,

    #[error("hole covers the entire grid; nothing to inpaint from")]
    Unfillable,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no defined entries to aggregate")]
    EmptyTable,

    #[error("case {case_id}: {source}")]
    Case {
        case_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown case id {0:?}")]
    UnknownCase(String),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("augmentation {output_id} ({strategy}, background {background}) failed: {source}")]
    Augmentation {
        output_id: String,
        strategy: String,
        background: String,
        #[source]
        source: Box<Error>,
    },

    #[error("phantom generation failed: {0}")]
    Phantom(String),

    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Nifti {
        path: PathBuf,
        #[source]
        source: nifti::NiftiError,
    },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_case(self, case_id: &str) -> Self {
        Error::Case {
            case_id: case_id.to_string(),
            source: Box::new(self),
        }
    }
}
