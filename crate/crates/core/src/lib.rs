//! Partition-aware item-item collaborative filtering.
//!
//! The crate is organised around the pipeline used to benchmark
//! partition-aware similarity models against classic baselines:
//!
//! * [`data`]: sparse binary interaction storage, degree normalisation,
//!   matrix-free item Gram operators and dataset statistics.
//! * [`split`]: seeded per-user hold-out splits and head/tail item segments.
//! * [`spectral`]: Lanczos eigensolver, Fiedler bipartitioning and
//!   size-bounded recursive partitioning.
//! * [`baselines`], [`fpsr`], [`bism`]: similarity models.
//! * [`eval`]: top-K recommendation, Recall/nDCG, paired significance.
//! * [`hpo`]: seeded random/TPE search and the partition-size sweep.
//!
//! All randomness is seeded and every fit is deterministic for a fixed
//! input and configuration.

pub mod baselines;
pub mod bism;
pub mod data;
pub mod eval;
pub mod fpsr;
pub mod hpo;
pub mod linalg;
pub mod model;
pub mod spectral;
pub mod split;
pub mod synth;

pub use data::{DatasetStats, InteractionMatrix};
pub use model::{Model, Recommender, SimilarityModel};
