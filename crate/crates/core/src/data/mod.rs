//! Interaction storage and the operators derived from it.

mod gram;
mod io;
mod matrix;
mod stats;

pub use gram::{GramOperator, NormalizedView};
pub use io::{load_interactions, parse_interactions, write_pairs, Delimiter, Format};
pub use matrix::{IdMap, InteractionMatrix};
pub use stats::{compute_stats, gini, DatasetStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("index ({user}, {item}) outside a {n_users}x{n_items} matrix")]
    OutOfBounds {
        user: usize,
        item: usize,
        n_users: usize,
        n_items: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown id {0:?}")]
    UnknownId(String),
}
