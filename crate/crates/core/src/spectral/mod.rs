//! Spectral machinery: eigensolver, Fiedler bipartition, recursive
//! size-bounded item partitioning.

mod fiedler;
mod lanczos;
mod partition;
mod tridiagonal;

pub use fiedler::{fiedler_split, FiedlerSplit, SplitMethod};
pub use lanczos::{top_eigenpairs, EigConfig, EigenBasis};
pub use partition::{recursive_partition, PartitionAssignment, SplitRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("requested {requested} eigenpairs from a {dim}-dimensional operator")]
    Dimension { requested: usize, dim: usize },
    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    NotConverged {
        residuals: Vec<f64>,
        iterations: usize,
    },
    #[error("cannot split a node of {0} item(s)")]
    TooSmall(usize),
    #[error("tau must lie in (0, 1], got {0}")]
    Tau(f64),
    #[error("splitting a node of {node_size} items failed: {source}")]
    Partition {
        node_size: usize,
        #[source]
        source: Box<SpectralError>,
    },
}
