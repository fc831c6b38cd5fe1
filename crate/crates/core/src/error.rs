use std::path::PathBuf;

use thiserror::Error;

use crate::dag::Violation;
use crate::ids::{AnchorId, LogicId, ObservationId};

pub type Result<T, E = MemoryError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("observation {0} was already ingested")]
    DuplicateObservation(ObservationId),

    #[error("mention `@{0}` matches no percept in the record and no existing anchor")]
    DanglingMention(String),

    #[error("observation {0} has not been ingested")]
    NotIngested(ObservationId),

    #[error("no edge {from} -> {to}")]
    MissingEdge { from: String, to: String },

    #[error("`{0}` is not a step node")]
    NotAStepNode(String),

    #[error("no step labelled `{0}`")]
    UnknownStep(String),

    #[error("invalid prior: Beta parameters must be >= 1, got ({alpha}, {beta})")]
    InvalidPrior { alpha: f64, beta: f64 },

    #[error("fusion would create a cycle")]
    FusionCycle,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid dag: {}", format_violations(.0))]
    InvalidDag(Vec<Violation>),

    #[error("no logic node matches the goal")]
    NoMatch,

    #[error("path enumeration exceeded limits ({0})")]
    PathExplosion(String),

    #[error("unknown anchor {0}")]
    UnknownAnchor(AnchorId),

    #[error("unknown person `{0}`")]
    UnknownPerson(String),

    #[error("unknown logic node {0}")]
    UnknownLogic(LogicId),

    #[error("config error: {0}")]
    Config(String),

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("malformed observation record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
