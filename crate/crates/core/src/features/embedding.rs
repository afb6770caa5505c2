use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{FeatureError, FeatureMatrix};
use crate::corpus::LabeledCorpus;
use crate::textproc::{Normalizer, TokenSeq};

/// Pretrained token vectors of a fixed dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    source_name: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_name: impl Into<String>) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::Shape("embedding dim must be positive".into()));
        }
        Ok(EmbeddingTable { dim, vectors: HashMap::new(), source_name: source_name.into() })
    }

    /// Inserts a vector unless the token is already present. Returns whether it was inserted.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<bool, FeatureError> {
        if vector.len() != self.dim {
            return Err(FeatureError::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite);
        }
        let token = token.into();
        if self.vectors.contains_key(&token) {
            return Ok(false);
        }
        self.vectors.insert(token, vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

/// Loads a word-vector text file (`[count dim]` header optional, then
/// `token v1 .. vD` per line). The first occurrence of a duplicate token wins.
pub fn load_embedding_table(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable, FeatureError> {
    load_embedding_table_filtered(path, expected_dim, None)
}

/// Like [`load_embedding_table`] but only keeps tokens in `keep`.
pub fn load_embedding_table_filtered(
    path: &Path,
    expected_dim: Option<usize>,
    keep: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, FeatureError> {
    let io_err = |source| FeatureError::Io { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(io_err)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_embedding_table(BufReader::new(file), expected_dim, keep, name)
}

pub(crate) fn parse_embedding_table<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
    keep: Option<&HashSet<String>>,
    source_name: String,
) -> Result<EmbeddingTable, FeatureError> {
    let mut dim: Option<usize> = None;
    let mut table: Option<EmbeddingTable> = None;
    let mut first = true;

    let check_dim = |d: usize, line: usize| -> Result<(), FeatureError> {
        match expected_dim {
            Some(e) if e != d => {
                Err(FeatureError::Parse { line, reason: format!("dimension mismatch: expected {e}, found {d}") })
            }
            _ => Ok(()),
        }
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| FeatureError::Parse { line: line_no, reason: e.to_string() })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();

        if std::mem::take(&mut first) && rest.len() == 1 {
            if let (Ok(_count), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                if d == 0 {
                    return Err(FeatureError::Parse { line: line_no, reason: "header dim is zero".into() });
                }
                check_dim(d, line_no)?;
                dim = Some(d);
                continue;
            }
        }

        let d = *dim.get_or_insert(rest.len());
        if d == 0 {
            return Err(FeatureError::Parse { line: line_no, reason: "vector has no components".into() });
        }
        check_dim(d, line_no)?;
        if rest.len() != d {
            return Err(FeatureError::Parse {
                line: line_no,
                reason: format!("ragged row: {} components, expected {d}", rest.len()),
            });
        }
        let table = match &mut table {
            Some(t) => t,
            None => table.insert(EmbeddingTable::new(d, source_name.clone())?),
        };
        if keep.is_some_and(|k| !k.contains(token)) || table.get(token).is_some() {
            continue;
        }
        let vector = rest
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| FeatureError::Parse { line: line_no, reason: format!("non-numeric component: {e}") })?;
        table.insert(token, vector).map_err(|e| FeatureError::Parse { line: line_no, reason: e.to_string() })?;
    }

    match (table, dim) {
        (Some(t), _) => Ok(t),
        (None, Some(d)) => EmbeddingTable::new(d, source_name),
        (None, None) => Err(FeatureError::Parse { line: 0, reason: "embedding file is empty".into() }),
    }
}

/// Mean of the in-table token vectors; the zero vector when none are known.
pub fn pool_document(table: &EmbeddingTable, tokens: &TokenSeq) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in tokens.iter() {
        if let Some(v) = table.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

pub fn embed_texts<'a>(
    table: &EmbeddingTable,
    texts: impl IntoIterator<Item = &'a str>,
    normalizer: &Normalizer,
) -> Result<FeatureMatrix, FeatureError> {
    let mut data = Vec::new();
    let mut n = 0;
    for text in texts {
        data.extend(pool_document(table, &normalizer.tokenize(text)));
        n += 1;
    }
    FeatureMatrix::dense(n, table.dim(), data)
}

pub fn embed_corpus(
    table: &EmbeddingTable,
    corpus: &LabeledCorpus,
    normalizer: &Normalizer,
) -> Result<FeatureMatrix, FeatureError> {
    embed_texts(table, corpus.texts(), normalizer)?.with_row_ids(corpus.documents.iter().map(|d| d.id).collect())
}

/// Reads the `N D` / `row_id v1 .. vD` sentence-vector format and aligns
/// rows to corpus order.
pub fn load_precomputed_vectors(path: &Path, corpus: &LabeledCorpus) -> Result<FeatureMatrix, FeatureError> {
    let file = File::open(path).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })?;
    parse_precomputed_vectors(BufReader::new(file), corpus)
}

pub fn parse_precomputed_vectors<R: BufRead>(reader: R, corpus: &LabeledCorpus) -> Result<FeatureMatrix, FeatureError> {
    parse_vector_rows(reader, Some(corpus.len()))?.with_row_ids(corpus.documents.iter().map(|doc| doc.id).collect())
}

/// Parses the sentence-vector format with rows ordered by `row_id`. When
/// `expected` is given, the header count must match it.
pub fn parse_vector_rows<R: BufRead>(reader: R, expected: Option<usize>) -> Result<FeatureMatrix, FeatureError> {
    let mut lines = reader.lines().enumerate();
    let bad = |line: usize, reason: String| FeatureError::Parse { line, reason };

    let (n, d) = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(bad(1, "missing `N D` header".into()));
        };
        let line = line.map_err(|e| bad(idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [n, d] => n.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some((n, d)) if d > 0 => break (n, d),
            _ => return Err(bad(idx + 1, format!("expected `N D` header, found '{line}'"))),
        }
    };
    if let Some(m) = expected.filter(|&m| m != n) {
        return Err(FeatureError::CountMismatch { file: n, corpus: m });
    }

    let mut data = vec![0.0; n * d];
    let mut seen = vec![false; n];
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| bad(line_no, e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let id: usize = id.parse().map_err(|_| bad(line_no, format!("bad row id '{id}'")))?;
        let values: Vec<f64> = fields
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(line_no, format!("non-numeric component: {e}")))?;
        if values.len() != d {
            return Err(bad(line_no, format!("{} components, expected {d}", values.len())));
        }
        if id >= n {
            return Err(bad(line_no, format!("row id {id} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(FeatureError::DuplicateRow(id));
        }
        data[id * d..(id + 1) * d].copy_from_slice(&values);
        rows += 1;
    }
    if rows != n {
        let missing = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(FeatureError::MissingRow(missing));
    }
    FeatureMatrix::dense(n, d, data)
}
