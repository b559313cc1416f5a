//! Training-free temporal action segmentation.
//!
//! Frames are clustered with a temporally weighted first-neighbor hierarchy
//! ([`hierarchy`]), refined to a requested number of segments ([`refine`]),
//! and scored against ground truth under one-to-one label matching
//! ([`eval`]).

pub mod baselines;
pub mod bench;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod refine;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use hierarchy::{build_hierarchy, Linkage};
pub use refine::{refine_to_k, segment, select_level, SegmentOutcome};
pub use types::{
    relabel_dense, validate_sequence, EvalReport, FeatureSequence, GroundTruth, Partition,
    PartitionHierarchy, Segment,
};
