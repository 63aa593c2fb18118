use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite coordinate at point index {index}")]
    NonFinite { index: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate neighborhood: {count} points, at least 3 required")]
    DegenerateNeighborhood { count: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unknown format: {0}")]
    UnknownFormat(String),
    #[error("prediction/cloud misalignment: {0}")]
    Misalignment(String),
    #[error("probability out of range [0, 1] at index {index}: {value}")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("non-finite offset at index {index}")]
    NonFiniteOffset { index: usize },
    #[error("no tree base available for tree {tree_id}")]
    MissingBase { tree_id: u32 },
    #[error("no instances found")]
    NoInstances,
    #[error("{} point(s) not covered by any tile inner region, first: {:?}", .0.len(), &.0[..(.0.len()).min(10)])]
    UncoveredPoints(Vec<usize>),
    #[error("missing prediction for tile {0}")]
    MissingTile(usize),
    #[error("labels required: {0}")]
    MissingLabels(String),
    #[error("no ground-truth tree instances")]
    NoGroundTruth,
    #[error("no tree points")]
    NoTreePoints,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}
