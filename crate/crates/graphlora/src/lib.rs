//! Patch correctness classification with graph-conditioned low-rank adapters.
//!
//! [`gnn`] turns an attributed patch graph into per-line features, [`adapter`]
//! uses them to modulate the query and value weights of the [`host`]
//! transformer, and [`train`] drives training, evaluation and k-fold
//! cross-validation.

pub mod adapter;
pub mod config;
pub mod extract;
pub mod gnn;
pub mod host;
pub mod metrics;
pub mod train;
pub mod vocab;

use tensor_core::TensorError;
use thiserror::Error;

pub use config::{AttributeMode, FusionMode, NodeDrop, TrainConfig};
pub use host::Model;
pub use metrics::Metrics;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("adapter rank {rank} exceeds min(d, k) = {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("adapter rank {rank} cannot be split into {heads} heads")]
    HeadSplit { rank: usize, heads: usize },
    #[error("singular value decomposition failed: {0}")]
    Svd(TensorError),
    #[error("column {column} of the updated direction matrix is zero")]
    DegenerateColumn { column: usize },
    #[error("the configured fusion mode needs graph features")]
    MissingGraph,
    #[error("fusion needs at least one graph node and one token")]
    EmptyFusionInput,
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl ModelError {
    /// Whether the failure comes from the numbers rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ModelError::Svd(_)
                | ModelError::DegenerateColumn { .. }
                | ModelError::Tensor(
                    TensorError::NonFiniteInput(_) | TensorError::NoConvergence { .. }
                )
        )
    }
}
