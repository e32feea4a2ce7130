use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("gravity magnitude must be positive and finite, got {0}")]
    InvalidGravity(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("support polygon needs at least one active contact")]
    NoActiveContacts,
    #[error("invalid foot parameter `{field}`: {reason}")]
    InvalidFootParams { field: &'static str, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptionError {
    #[error("state index {k} out of range 1..={n}")]
    StateIndex { k: usize, n: usize },
    #[error("control index {k} out of range 0..{n}")]
    ControlIndex { k: usize, n: usize },
    #[error("horizon must contain at least one stage")]
    EmptyHorizon,
    #[error("reference trajectory has {got} stages, expected {expected}")]
    ReferenceLength { got: usize, expected: usize },
    #[error("cost stage {0} is outside 1..=N")]
    CostStage(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid solver setting `{field}`: {reason}")]
    InvalidSettings { field: &'static str, reason: String },
    #[error("factorization failed: zero pivot at column {0}")]
    ZeroPivot(usize),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{}: `{field}` {reason}", line.map(|l| format!("line {l}")).unwrap_or_else(|| "config".into()))]
    Invalid {
        field: String,
        reason: String,
        line: Option<usize>,
    },
    #[error("unknown bundled scenario `{0}`")]
    UnknownScenario(String),
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("fall detected at t = {time:.3} s (CoM height {height:.4} m)")]
    Fall { time: f64, height: f64 },
    #[error("solver failed for {count} consecutive cycles at t = {time:.3} s")]
    SolverFailure { time: f64, count: usize },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}
