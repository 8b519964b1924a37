use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("anchor set is empty")]
    EmptyAnchorSet,
    #[error("project `{project}` has {diffs} diffs, at least 3 are required")]
    TooFewCommits { project: String, diffs: usize },
    #[error("{projects} projects cannot fill {folds} folds")]
    TooFewProjects { projects: usize, folds: usize },
    #[error("project `{0}` has no pairs to balance")]
    EmptyProject(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("remote embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("ranking has no positive candidate")]
    NoPositives,
    #[error("sample lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("statistic is undefined for constant input")]
    ConstantInput,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing artifact {0}; run the producing command first")]
    MissingArtifact(PathBuf),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
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

    /// True for errors caused by the caller's configuration or command order
    /// rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid(_) | Error::MissingArtifact(_) | Error::TooFewCommits { .. }
                | Error::TooFewProjects { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
