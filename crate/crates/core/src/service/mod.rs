// SPDX-License-Identifier: Apache-2.0

//! Project store, mutation log and HTTP API.
//!
//! A project is a directory holding `config.json`, `images/`,
//! `annotations/{image_id}.json`, `prior_db.tsv`, `mutations.log` and
//! `export/`. Every mutation is validated in memory, appended to the log,
//! and only then written to the annotation file and the prior database.
//! Opening a project replays the log and repairs whatever a crash left
//! behind.

mod http;
mod log;
mod project;
mod store;

pub use http::{router, serve, SharedProject};
pub use log::{apply, prior_records, read_log, LogContents, LogRecord, Mutation};
pub use project::{
    replay_from_empty, AnnotateRequest, AnnotateResponse, ExportFormat, ExportResult, FaultPoint, GraphEdge, GraphNode,
    ImageSummary, Issue, NewCluster, NewInstance, NewRegion, OpenMode, OpenReport, Project, RecommendRequest,
    RecommendResponse, SceneGraph,
};
pub use store::{is_valid_image_id, ProjectPaths};

use std::path::Path;

use crate::formats::FormatError;
use crate::model::Violation;
use crate::recommender::PriorError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no config file at {0}")]
    MissingConfig(String),
    #[error("invalid config: {0}")]
    Config(FormatError),
    #[error("corrupt annotation file {file}: {cause}")]
    CorruptAnnotation { file: String, cause: String },
    #[error("corrupt mutation log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("`{subject}` and `{object}` share no region")]
    PairOutsideRegions { subject: String, object: String },
    #[error(transparent)]
    Invalid(Violation),
    #[error(transparent)]
    Format(FormatError),
    #[error("prior database: {0}")]
    Prior(#[from] PriorError),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("project was opened read-only")]
    ReadOnly,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("injected fault at {0:?}")]
    InjectedFault(FaultPoint),
}

impl ServiceError {
    pub(crate) fn storage(path: &Path, e: std::io::Error) -> Self {
        ServiceError::StorageFailure(format!("{}: {e}", path.display()))
    }

    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::MissingConfig(_) => "MissingConfig",
            ServiceError::Config(e) | ServiceError::Format(e) => e.code(),
            ServiceError::CorruptAnnotation { .. } => "CorruptAnnotation",
            ServiceError::CorruptLog { .. } => "CorruptLog",
            ServiceError::UnknownImage(_) => "UnknownImage",
            ServiceError::PairOutsideRegions { .. } => "PairOutsideRegions",
            ServiceError::Invalid(v) => v.code(),
            ServiceError::Prior(PriorError::UnderflowWouldOccur) => "UnderflowWouldOccur",
            ServiceError::Prior(PriorError::Parse { .. }) => "PriorDbMismatch",
            ServiceError::StorageFailure(_) | ServiceError::InjectedFault(_) => "StorageFailure",
            ServiceError::ReadOnly => "ReadOnly",
            ServiceError::BadRequest(_) => "BadRequest",
        }
    }

    /// True for failures caused by the request rather than the store.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            ServiceError::UnknownImage(_)
                | ServiceError::PairOutsideRegions { .. }
                | ServiceError::Invalid(_)
                | ServiceError::Format(_)
                | ServiceError::BadRequest(_)
                | ServiceError::ReadOnly
        )
    }
}

impl From<Violation> for ServiceError {
    fn from(v: Violation) -> Self {
        ServiceError::Invalid(v)
    }
}
