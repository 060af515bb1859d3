//! Failure records and exit codes.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    ConfigInvalid,
    PlanFailed,
    IoError,
    CheckFailed,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::CheckFailed => 1,
            FailureKind::ConfigInvalid => 2,
            FailureKind::PlanFailed => 3,
            FailureKind::IoError => 4,
        }
    }
}

/// Machine-readable error record, printed to stderr as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub error: FailureKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl Failure {
    fn new(error: FailureKind, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            step: None,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(FailureKind::ConfigInvalid, message)
    }

    pub fn config_from(e: moment_steer::Error) -> Self {
        Self::config(e.to_string())
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(FailureKind::IoError, message)
    }

    pub fn check(message: impl Into<String>) -> Self {
        Self::new(FailureKind::CheckFailed, message)
    }

    pub fn plan(e: moment_steer::Error) -> Self {
        Self {
            step: e.step(),
            ..Self::new(FailureKind::PlanFailed, e.to_string())
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}
