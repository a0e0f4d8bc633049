//! Failure classes and their process exit codes.

use std::fmt;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, invalid parameters or configuration.
    Usage,
    /// Unreadable or malformed inputs, unwritable outputs, sockets.
    Io,
    /// A broken internal invariant.
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Internal => 3,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(message: impl fmt::Display) -> CliError {
    CliError { kind: Kind::Usage, error: anyhow::anyhow!("{message}") }
}

/// Attaches a failure class and a context message to any error.
pub trait Classify<T> {
    fn usage(self, context: impl fmt::Display) -> CliResult<T>;
    fn io(self, context: impl fmt::Display) -> CliResult<T>;
    fn internal(self, context: impl fmt::Display) -> CliResult<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn usage(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| wrap(Kind::Usage, e, context))
    }

    fn io(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| wrap(Kind::Io, e, context))
    }

    fn internal(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| wrap(Kind::Internal, e, context))
    }
}

fn wrap<E>(kind: Kind, e: E, context: impl fmt::Display) -> CliError
where
    E: std::error::Error + Send + Sync + 'static,
{
    CliError { kind, error: anyhow::Error::new(e).context(context.to_string()) }
}
