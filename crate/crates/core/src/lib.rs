//! Classical text classification over TF-IDF, pooled word vectors and
//! precomputed sentence embeddings.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`corpus`] loads tab-separated splits into a [`LabeledCorpus`].
//! 2. [`textproc`] normalizes and tokenizes comment text.
//! 3. [`features`] turns a corpus into a [`FeatureMatrix`] (TF-IDF, mean-pooled
//!    word vectors, or precomputed sentence vectors) with optional PCA.
//! 4. [`augment`] rebalances minority classes with random insertion, swap
//!    and deletion.
//! 5. [`models`] trains the eight classical learners behind one
//!    [`TrainedModel`] contract.
//! 6. [`tuning`] runs grid searches on the dev split and [`metrics`] scores
//!    them with macro and weighted F1.
//! 7. [`experiment`] wires everything together from a JSON config.

pub mod augment;
pub mod corpus;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod models;
pub mod textproc;
pub mod tuning;

pub use corpus::{ClassLabel, Document, LabelMap, LabeledCorpus, Split, TaskMode};
pub use features::FeatureMatrix;
pub use metrics::EvalReport;
pub use models::{ModelKind, TrainConfig, TrainedModel};
