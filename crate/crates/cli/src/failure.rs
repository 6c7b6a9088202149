use std::fmt;

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Numerical,
    Verification,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Numerical => 3,
            FailureKind::Verification => 4,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: FailureKind::Config,
        message: msg.into(),
    }
    .into()
}

pub fn numerical_error(msg: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: FailureKind::Numerical,
        message: msg.into(),
    }
    .into()
}

pub fn verification_error(msg: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: FailureKind::Verification,
        message: msg.into(),
    }
    .into()
}

/// Maps an error chain to the exit-code contract; unclassified errors give 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.kind.exit_code();
    }
    if let Some(e) = err.downcast_ref::<gum_core::Error>() {
        return match e {
            gum_core::Error::InvalidState(_) | gum_core::Error::InvalidProjector(_) => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<serde_json::Error>().is_some() || err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}
