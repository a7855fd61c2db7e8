//! Failures and their exit codes.

use std::fmt;

/// Exit status 2 for anything the user can fix in the inputs, 1 for
/// numerical failures and failed checks.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Config,
    Numeric,
    Check,
    Output,
}

impl Kind {
    fn tag(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Config => "config",
            Kind::Numeric => "numeric",
            Kind::Check => "check",
            Kind::Output => "output",
        }
    }
}

impl Failure {
    pub fn new(kind: Kind, msg: impl Into<String>) -> Self {
        Failure {
            kind,
            msg: msg.into(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::new(Kind::Usage, msg)
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(Kind::Config, msg)
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Usage | Kind::Config => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    /// One line: `error[kind]: message`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: Vec<&str> = self.msg.split_whitespace().collect();
        write!(f, "error[{}]: {}", self.kind.tag(), flat.join(" "))
    }
}

/// Library errors met while loading inputs are the user's to fix.
pub fn input(e: otbot::Error) -> Failure {
    Failure::config(e.to_string())
}

/// Library errors met while computing.
pub fn numeric(e: otbot::Error) -> Failure {
    match e {
        otbot::Error::InvalidParam { .. }
        | otbot::Error::Config { .. }
        | otbot::Error::Plan { .. } => input(e),
        _ => Failure::new(Kind::Numeric, e.to_string()),
    }
}

pub type CliResult<T> = Result<T, Failure>;
