use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single violated configuration rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown robot id {0}")]
    UnknownRobot(usize),

    #[error("estimator not ready: information matrix is rank deficient")]
    NotReady,

    #[error("shape parse error at line {line}: {msg}")]
    ShapeParse { line: usize, msg: String },

    #[error("L + B is singular; bounds are undefined")]
    SingularGraph,

    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),

    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(line: usize, msg: impl Into<String>) -> Self {
        Error::ShapeParse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn trace(line: usize, msg: impl Into<String>) -> Self {
        Error::TraceParse {
            line,
            msg: msg.into(),
        }
    }
}
