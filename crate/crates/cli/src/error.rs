use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input file (exit 2).
    Usage(String),
    /// Numerical or I/O failure during the run (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Runtime(_) => "runtime",
            CliError::Usage(_) => "usage",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Runtime(m) | CliError::Usage(m) => m,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Input-file errors are usage errors, with the path prefixed.
    pub fn input(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
            message: &'a str,
            exit_code: u8,
        }
        serde_json::to_string(&Body {
            error: self.kind(),
            message: self.message(),
            exit_code: self.exit_code(),
        })
        .expect("plain struct serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl From<qutrit_oam::Error> for CliError {
    fn from(e: qutrit_oam::Error) -> Self {
        use qutrit_oam::Error as E;
        match e {
            E::IllPosed { .. } | E::GridTooSmall(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
