use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Failure class of a run; each maps to a distinct process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Domain,
    Numerical,
    Io,
    Check,
}

impl Category {
    /// Exit code; 2 is left to argument-parsing errors.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 3,
            Category::Domain => 4,
            Category::Numerical => 5,
            Category::Io => 6,
            Category::Check => 7,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Config => "CONFIG",
            Category::Domain => "DOMAIN",
            Category::Numerical => "NUMERICAL",
            Category::Io => "IO",
            Category::Check => "CHECK",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One problem found while validating a config, located by field path
/// (`kernel[0].hurst`) or by line and column for syntax errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub location: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", list(.0))]
    Config(Vec<ConfigIssue>),

    #[error(transparent)]
    Model(#[from] volterra_ldp::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Check(String),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config(vec![ConfigIssue::new(location, message)])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        use volterra_ldp::Error as E;
        match self {
            CliError::Config(_) => Category::Config,
            CliError::Io { .. } => Category::Io,
            CliError::Check(_) => Category::Check,
            CliError::Model(e) => match e {
                E::Config(_) | E::Divisibility { .. } => Category::Config,
                E::Domain(_) | E::Dimension(_) | E::Validation(_) => Category::Domain,
                E::Singular { .. }
                | E::SingularTerminal(_)
                | E::Quadrature { .. }
                | E::InsufficientData(_) => Category::Numerical,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
