use std::fmt;
use std::io;

use stochctl_core::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Parse {
        line: Option<usize>,
        field: String,
        message: String,
    },
    Validation(String),
    Core(stochctl_core::Error),
    Io { path: String, source: io::Error },
}

impl CliError {
    /// 2 for invalid input, 3 for numerical failure, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Io { .. } => 4,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Validation(_) => "validation_error",
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io_error",
        }
    }

    pub fn io(path: impl fmt::Display, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { line, field, message } => {
                write!(f, "parse error")?;
                if let Some(l) = line {
                    write!(f, " at line {l}")?;
                }
                if !field.is_empty() {
                    write!(f, " in `{field}`")?;
                }
                write!(f, ": {message}")
            }
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<stochctl_core::Error> for CliError {
    fn from(e: stochctl_core::Error) -> Self {
        CliError::Core(e)
    }
}
