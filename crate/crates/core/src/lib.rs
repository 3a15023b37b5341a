//! Dynamic graph snapshot engine.
//!
//! Ingests timestamped tracking data into a sequence of graph frames, extracts
//! hot-encoded graph vectors and stability indicators, builds a hierarchical
//! snapshot tree by threshold-gated greedy merging, and projects graph vectors
//! to 2D with exact t-SNE.
//!
//! Data-parallel loops (per-frame features, snapshot construction, pairwise
//! t-SNE kernels) run on rayon when the `parallel` feature is enabled (the
//! default) and fall back to sequential iteration otherwise. Every such entry
//! point also takes an explicit [`Execution`] so both paths can be compared.

pub mod engine;
pub mod error;
pub mod exec;
pub mod features;
pub mod ingest;
pub mod model;
pub mod projection;
pub mod session;

pub use engine::{change_degrees, generate_layer, merge_condition, ChangeDegrees, GeneratedLayer};
pub use error::{Error, Result};
pub use exec::Execution;
pub use features::{
    graph_stability, link_distance, link_stability, player_degree, snapshot_indicators, vectorize,
    CombinedVector, FeatureConfig, SnapshotIndicators,
};
pub use ingest::{
    parse_events, parse_tracking, DatasetConfig, EventRecord, LinkInducerConfig, LinkMode,
    TrackingData,
};
pub use model::{
    merge_snapshots, ChangeThresholds, Frames, Link, NodeState, NodeUniverse, Position, Snapshot,
    SnapshotId, SnapshotTree, TimestampedGraph,
};
pub use projection::{project, ProjectionConfig, ProjectionPoint};
pub use session::{GenerationSession, HistoryEntry, LayerOp};

/// Version tag embedded in every JSON artifact and API response.
pub const SCHEMA_VERSION: u32 = 1;
