//! Semantic normalization of action and event labels: lexical folding and
//! lemmatization, synonym groups, embedding similarity, connected-component
//! clustering, canonical relabeling of graphs.

mod cluster;
mod embed;
mod lexicon;
mod map;
pub mod union_find;

use thiserror::Error;

pub use cluster::{assign_canonical, cluster_labels, cluster_labels_with, LabelCluster, Pool};
pub use embed::{
    cosine, embed_hashed, load_vector_file, remote_embed, EmbeddingProvider, EmbeddingVector,
    HashedNgram, RemoteEmbedder, VectorFile, DEFAULT_DIM, DEFAULT_REMOTE_TIMEOUT,
};
pub use lexicon::{fold_label, label_tokens, lemmatize_token, SynonymLexicon};
pub use map::{
    apply_normalization, build_normalization_map, pool_of, GoldLabels, NormalizationMap,
    Normalizer, DEFAULT_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("empty label")]
    EmptyLabel,
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("no vector for label `{0}`")]
    MissingLabel(String),
    #[error("embedding request timed out")]
    Timeout,
    #[error("embedding service returned HTTP {0}")]
    BadStatus(u16),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("unreadable embedding response: {0}")]
    BadResponse(String),
    #[error("invalid lexicon: {0}")]
    Lexicon(String),
    #[error("invalid vector file: {0}")]
    VectorFile(String),
    #[error("invalid normalization map: {0}")]
    InvalidMap(String),
    #[error("graph is already normalized")]
    AlreadyNormalized,
}

impl NormalizeError {
    /// Errors raised by an embedding provider rather than by the caller's input.
    pub fn is_provider_error(&self) -> bool {
        matches!(
            self,
            NormalizeError::MissingLabel(_)
                | NormalizeError::Timeout
                | NormalizeError::BadStatus(_)
                | NormalizeError::DimensionMismatch { .. }
                | NormalizeError::Transport(_)
                | NormalizeError::BadResponse(_)
                | NormalizeError::VectorFile(_)
        )
    }
}
