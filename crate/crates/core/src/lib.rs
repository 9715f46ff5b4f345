//! Random currents of the near-critical Curie-Weiss model.

pub mod backbone;
pub mod error;
pub mod exact;
pub mod limit;
pub mod limit_law;
pub mod model;
pub mod numeric;
pub mod phi4;
pub mod quad;
pub mod sampler;
pub mod series;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use exact::{ExactLaw, MeasureKind, TanglingLaw, TruncationSpec};
pub use model::{ClusterReport, Current, Edge, EvenPartition, ModelParams, Partition, SourceSet};
