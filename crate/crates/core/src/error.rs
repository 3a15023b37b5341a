use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // model
    #[error("dataset contains no frames")]
    EmptyDataset,
    #[error("timestamps decrease at frame {index}")]
    UnorderedTimestamps { index: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("duplicate node id `{0}` in universe")]
    DuplicateNode(String),
    #[error("snapshots to merge are not adjacent")]
    NonContiguousRun,
    #[error("cannot merge an empty run of snapshots")]
    EmptyRun,
    #[error("selection {start}..{end} is outside the dataset of {len} frames")]
    SelectionOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    // features
    #[error("node ordinal {ordinal} outside universe of {universe} nodes")]
    OrdinalOutOfRange { ordinal: u32, universe: usize },
    #[error("negative input `{0}`")]
    NegativeInput(&'static str),
    #[error("epsilon must be finite and positive")]
    InvalidEpsilon,
    #[error("snapshot has no nodes")]
    EmptySnapshot,
    #[error("node {node} is absent from frame {frame}")]
    NodeAbsent { node: u32, frame: usize },
    #[error("frame index {index} outside snapshot of {len} frames")]
    FrameIndexOutOfRange { index: usize, len: usize },

    // engine / session
    #[error("snapshot references nodes outside the universe")]
    UniverseMismatch,
    #[error("cannot generate an empty layer")]
    EmptyLayer,
    #[error("layer {requested} is not the top layer ({top})")]
    LayerNotTop { requested: usize, top: usize },
    #[error("the base layer cannot be deleted")]
    CannotDeleteBase,
    #[error("history replay diverged at entry {step}")]
    ReplayDivergence { step: usize },

    // ingest
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("timestamps go backwards at line {line}")]
    NonMonotoneTimestamps { line: u64 },
    #[error("court dimensions are not configured")]
    UnknownUnits,
    #[error("score decreases at line {line}")]
    ScoreRegression { line: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),

    // projection
    #[error("projection needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("vector {index} has length {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid projection config: {0}")]
    InvalidProjectionConfig(String),
    #[error("projection diverged to non-finite coordinates")]
    NumericalFailure,
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyDataset => "EmptyDataset",
            Error::UnorderedTimestamps { .. } => "UnorderedTimestamps",
            Error::InvalidFrame(_) => "InvalidFrame",
            Error::DuplicateNode(_) => "DuplicateNode",
            Error::NonContiguousRun => "NonContiguousRun",
            Error::EmptyRun => "EmptyRun",
            Error::SelectionOutOfRange { .. } => "SelectionOutOfRange",
            Error::InvalidThresholds(_) => "InvalidThresholds",
            Error::OrdinalOutOfRange { .. } => "OrdinalOutOfRange",
            Error::NegativeInput(_) => "NegativeInput",
            Error::InvalidEpsilon => "InvalidEpsilon",
            Error::EmptySnapshot => "EmptySnapshot",
            Error::NodeAbsent { .. } => "NodeAbsent",
            Error::FrameIndexOutOfRange { .. } => "FrameIndexOutOfRange",
            Error::UniverseMismatch => "UniverseMismatch",
            Error::EmptyLayer => "EmptyLayer",
            Error::LayerNotTop { .. } => "LayerNotTop",
            Error::CannotDeleteBase => "CannotDeleteBase",
            Error::ReplayDivergence { .. } => "ReplayDivergence",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::NonMonotoneTimestamps { .. } => "NonMonotoneTimestamps",
            Error::UnknownUnits => "UnknownUnits",
            Error::ScoreRegression { .. } => "ScoreRegression",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
            Error::TooFewPoints(_) => "TooFewPoints",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidProjectionConfig(_) => "InvalidProjectionConfig",
            Error::NumericalFailure => "NumericalFailure",
        }
    }
}
