use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureMatrix};
use crate::corpus::LabeledCorpus;
use crate::textproc::{Normalizer, TokenSeq};

/// Sorted token list with document frequencies. Column `i` is `tokens[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    document_frequency: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn document_frequency(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.document_frequency[i])
    }

    /// Smoothed idf: `ln((1 + n_docs) / (1 + df)) + 1`.
    pub fn idf_at(&self, column: usize) -> f64 {
        let n = self.n_docs as f64;
        let df = self.document_frequency[column] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf_at(i))
    }
}

pub fn tfidf_fit(corpus: &LabeledCorpus, normalizer: &Normalizer) -> Result<Vocabulary, FeatureError> {
    let docs: Vec<TokenSeq> = corpus.texts().map(|t| normalizer.tokenize(t)).collect();
    tfidf_fit_tokens(&docs)
}

pub fn tfidf_fit_tokens(docs: &[TokenSeq]) -> Result<Vocabulary, FeatureError> {
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(FeatureError::NoTokens);
    }
    let (tokens, document_frequency) = df.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary { tokens, document_frequency, n_docs: docs.len() })
}

pub fn tfidf_transform(
    vocab: &Vocabulary,
    corpus: &LabeledCorpus,
    normalizer: &Normalizer,
) -> Result<FeatureMatrix, FeatureError> {
    let docs: Vec<TokenSeq> = corpus.texts().map(|t| normalizer.tokenize(t)).collect();
    let ids = corpus.documents.iter().map(|d| d.id).collect();
    tfidf_transform_tokens(vocab, &docs)?.with_row_ids(ids)
}

/// Raw counts times smoothed idf, L2-normalized per row. Unknown tokens are ignored.
pub fn tfidf_transform_tokens(vocab: &Vocabulary, docs: &[TokenSeq]) -> Result<FeatureMatrix, FeatureError> {
    let rows = docs
        .iter()
        .map(|doc| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for t in doc.iter() {
                if let Some(j) = vocab.index_of(t) {
                    *counts.entry(j).or_default() += 1.0;
                }
            }
            let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(j, tf)| (j, tf * vocab.idf_at(j))).collect();
            let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, v)| *v /= norm);
            }
            row
        })
        .collect();
    FeatureMatrix::sparse(vocab.len().max(1), rows)
}
