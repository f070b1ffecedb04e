use thiserror::Error;

use crate::access::{AuthError, DenyReason};
use crate::document::ValidationReport;
use crate::rocrate::WorkflowCrate;
use crate::workflow::WorkflowError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Domain error taxonomy shared by every registry operation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid persistent identifier: {0}")]
    InvalidPid(String),
    #[error("namespace {requested:?} does not match the configured namespace {configured:?}")]
    NamespaceMismatch { requested: String, configured: String },
    #[error("identifier counter exhausted")]
    CounterExhausted,
    #[error("invalid document: {}", summarize(.0))]
    InvalidDocument(Box<ValidationReport>),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid crate: {}", summarize(.0))]
    InvalidCrate(Box<ValidationReport>),
    #[error("crate packaging: {0}")]
    Packaging(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("version {version} of {pid} not found")]
    VersionNotFound { pid: String, version: String },
    #[error("record {0} is tombstoned")]
    Tombstoned(String),
    #[error("record {0} is already tombstoned")]
    AlreadyTombstoned(String),
    /// Artifact retrieval on a tombstoned record. Carries the metadata-only
    /// crate when the caller asked for a package.
    #[error("gone: {pid}")]
    Gone {
        pid: String,
        metadata: Option<Box<WorkflowCrate>>,
    },
    #[error("unauthorized: {0}")]
    Unauthorized(DenyReason),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("embargo end must lie in the future")]
    PastTimestamp,
    #[error("no source reachable")]
    SourceUnreachable,
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("remote unreachable: {0}")]
    RemoteUnreachable(String),
    #[error("partial sync failure: {detail}")]
    PartialFailure {
        report: Box<crate::federation::SyncReport>,
        detail: String,
    },
    #[error("a sync with {0} is already running")]
    SyncInProgress(String),
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
}

fn summarize(report: &ValidationReport) -> String {
    report
        .errors()
        .map(|i| format!("{}: {}", i.property, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidPid(_) => "invalid-pid",
            Error::NamespaceMismatch { .. } => "namespace-mismatch",
            Error::CounterExhausted => "counter-exhausted",
            Error::InvalidDocument(_) => "invalid-document",
            Error::InvalidSource(_) => "invalid-source",
            Error::InvalidCrate(_) => "invalid-crate",
            Error::Packaging(_) => "packaging",
            Error::NotFound(_) => "not-found",
            Error::VersionNotFound { .. } => "version-not-found",
            Error::Tombstoned(_) => "tombstoned",
            Error::AlreadyTombstoned(_) => "already-tombstoned",
            Error::Gone { .. } => "gone",
            Error::Unauthorized(_) => "unauthorized",
            Error::Auth(_) => "unauthenticated",
            Error::MalformedQuery(_) => "malformed-query",
            Error::PastTimestamp => "past-timestamp",
            Error::SourceUnreachable => "source-unreachable",
            Error::StorageFailure(_) => "storage-failure",
            Error::RemoteUnreachable(_) => "remote-unreachable",
            Error::PartialFailure { .. } => "partial-failure",
            Error::SyncInProgress(_) => "sync-in-progress",
            Error::SandboxUnavailable(_) => "sandbox-unavailable",
            Error::Workflow(_) => "workflow",
        }
    }

    pub(crate) fn storage(err: impl std::fmt::Display) -> Self {
        Error::StorageFailure(err.to_string())
    }

    pub(crate) fn not_found(what: impl std::fmt::Display) -> Self {
        Error::NotFound(what.to_string())
    }
}
