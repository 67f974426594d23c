//! Federated learning: local training, similarity metrics and aggregation.

pub mod aggregate;
pub mod data;
pub mod metrics;
pub mod model;

use thiserror::Error;

pub use aggregate::{
    aggregate, krum_index, mask_model, masked_sum, trust_score, unmask_global, AggregationRule,
    EncodedSum,
};
pub use data::Dataset;
pub use metrics::{cosine_similarity, euclidean_distance, norm};
pub use model::{clip, evaluate, train_local, ModelFamily, ModelSpec, ModelVector, TrainingTask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlError {
    #[error("expected dimension {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("dataset shape does not match the model")]
    DataShape,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no models to aggregate")]
    NoModels,
    #[error("{rule} needs at least {needed} models, got {got}")]
    TooFewModels {
        rule: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("rule needs a server reference model")]
    MissingReference,
    #[error("masked sums aggregate field encodings, not plaintext models")]
    PlaintextMaskedSum,
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("unmasked coordinate {coordinate} is out of range")]
    UnmaskRange { coordinate: usize },
    #[error(transparent)]
    FixedPoint(#[from] crate::fixed::FixedPointError),
}
