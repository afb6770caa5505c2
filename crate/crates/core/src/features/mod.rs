//! Featurization: TF-IDF, pooled word vectors, precomputed sentence vectors
//! and PCA.

mod embedding;
mod matrix;
mod pca;
mod tfidf;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use embedding::{
    embed_corpus, embed_texts, load_embedding_table, load_embedding_table_filtered, load_precomputed_vectors,
    parse_precomputed_vectors, parse_vector_rows, pool_document, EmbeddingTable,
};
pub use matrix::{FeatureMatrix, RowView};
pub use pca::{pca_fit, pca_transform, PcaModel, PcaTarget};
pub use tfidf::{tfidf_fit, tfidf_fit_tokens, tfidf_transform, tfidf_transform_tokens, Vocabulary};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corpus has no tokens")]
    NoTokens,
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("matrix contains NaN or infinite values")]
    NonFinite,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector file lists {file} rows but corpus has {corpus}")]
    CountMismatch { file: usize, corpus: usize },
    #[error("row id {0} is missing")]
    MissingRow(usize),
    #[error("row id {0} appears more than once")]
    DuplicateRow(usize),
    #[error("invalid PCA target: {0}")]
    PcaTarget(String),
}
