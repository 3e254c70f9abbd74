use std::path::PathBuf;

use thiserror::Error;

use crate::topology::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario file: {0}")]
    Parse(String),

    #[error("scenario failed validation: {}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("infeasible signal plan: {0}")]
    InfeasiblePlan(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incident rejected: {0}")]
    Incident(String),

    #[error("empty action set")]
    EmptyActionSet,

    #[error("no traversals in measurement window")]
    NoTraversals,

    #[error("invalid reward input: {0}")]
    RewardInput(String),

    #[error("plans do not share a common cycle ({0} s vs {1} s)")]
    CycleMismatch(u32, u32),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("missing trained Q-tables for strategy {0}")]
    MissingTables(String),

    #[error("corrupt trace: {0}")]
    CorruptTrace(String),

    #[error("serialization failed: {0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
