//! Unified error taxonomy shared by every registry, manager and the wire layer.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed set of failure classes. Every fallible operation maps its failure
/// onto exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    NotFound,
    NameConflict,
    VersionNotFound,
    ValidationFailed,
    ActionNotFound,
    BackendFailure,
    ProtocolError,
    LifecycleViolation,
    EvolutionRejected,
    PersistenceError,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 10] = [
        ErrorKind::NotFound,
        ErrorKind::NameConflict,
        ErrorKind::VersionNotFound,
        ErrorKind::ValidationFailed,
        ErrorKind::ActionNotFound,
        ErrorKind::BackendFailure,
        ErrorKind::ProtocolError,
        ErrorKind::LifecycleViolation,
        ErrorKind::EvolutionRejected,
        ErrorKind::PersistenceError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::NotFound => "NotFound",
            ErrorKind::NameConflict => "NameConflict",
            ErrorKind::VersionNotFound => "VersionNotFound",
            ErrorKind::ValidationFailed => "ValidationFailed",
            ErrorKind::ActionNotFound => "ActionNotFound",
            ErrorKind::BackendFailure => "BackendFailure",
            ErrorKind::ProtocolError => "ProtocolError",
            ErrorKind::LifecycleViolation => "LifecycleViolation",
            ErrorKind::EvolutionRejected => "EvolutionRejected",
            ErrorKind::PersistenceError => "PersistenceError",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorKind> {
        ErrorKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified failure with human-readable detail.
///
/// `reasons` carries the individual rule violations for
/// [`ErrorKind::ValidationFailed`] (and the per-backend causes of an
/// aggregated [`ErrorKind::BackendFailure`]); it is empty otherwise.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct Error {
    pub kind: ErrorKind,
    pub detail: String,
    pub reasons: Vec<String>,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        Error { kind, detail: detail.into(), reasons: Vec::new() }
    }

    pub fn with_reasons(kind: ErrorKind, detail: impl Into<String>, reasons: Vec<String>) -> Self {
        Error { kind, detail: detail.into(), reasons }
    }

    pub fn not_found(what: impl fmt::Display) -> Self {
        Error::new(ErrorKind::NotFound, format!("{what} not found"))
    }

    pub fn conflict(what: impl fmt::Display) -> Self {
        Error::new(ErrorKind::NameConflict, format!("{what} already exists"))
    }

    pub fn validation(reasons: Vec<String>) -> Self {
        let detail = reasons.join("; ");
        Error::with_reasons(ErrorKind::ValidationFailed, detail, reasons)
    }

    pub fn invalid(reason: impl Into<String>) -> Self {
        Error::validation(vec![reason.into()])
    }

    pub fn backend(detail: impl Into<String>) -> Self {
        Error::new(ErrorKind::BackendFailure, detail)
    }

    pub fn protocol(detail: impl Into<String>) -> Self {
        Error::new(ErrorKind::ProtocolError, detail)
    }

    pub fn lifecycle(detail: impl Into<String>) -> Self {
        Error::new(ErrorKind::LifecycleViolation, detail)
    }

    pub fn persistence(detail: impl Into<String>) -> Self {
        Error::new(ErrorKind::PersistenceError, detail)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::persistence(e.to_string())
    }
}
