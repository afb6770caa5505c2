//! Tab-separated corpus ingestion and class statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gold label of a comment.
///
/// The derive order defines the canonical class order used by every model
/// and report in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    HopeSpeech,
    NonHopeSpeech,
    NonEnglish,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::HopeSpeech, ClassLabel::NonHopeSpeech, ClassLabel::NonEnglish];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::HopeSpeech => "HopeSpeech",
            ClassLabel::NonHopeSpeech => "NonHopeSpeech",
            ClassLabel::NonEnglish => "NonEnglish",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown class label '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// Three-way (hope / non-hope / non-English) or two-way (hope / non-hope).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    ThreeWay,
    TwoWay,
}

impl TaskMode {
    pub fn allows(&self, label: ClassLabel) -> bool {
        !(matches!(self, TaskMode::TwoWay) && label == ClassLabel::NonEnglish)
    }

    /// Classes legal for the task, in canonical order.
    pub fn classes(&self) -> Vec<ClassLabel> {
        ClassLabel::ALL.into_iter().filter(|c| self.allows(*c)).collect()
    }
}

impl FromStr for TaskMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "three_way" => Ok(TaskMode::ThreeWay),
            "two_way" => Ok(TaskMode::TwoWay),
            other => Err(format!("unknown task mode '{other}' (expected two_way or three_way)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub text: String,
    pub label: ClassLabel,
}

/// Binding from raw label strings found in the data files to [`ClassLabel`].
///
/// Order matters: the first raw string bound to a class is the one written
/// back out by [`write_corpus`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap(pub IndexMap<String, ClassLabel>);

impl LabelMap {
    pub fn get(&self, raw: &str) -> Option<ClassLabel> {
        self.0.get(raw).copied()
    }

    pub fn raw_for(&self, label: ClassLabel) -> &str {
        self.0.iter().find(|(_, l)| **l == label).map(|(raw, _)| raw.as_str()).unwrap_or_else(|| label.as_str())
    }
}

impl Default for LabelMap {
    /// Raw tokens of the public HopeEDI English release plus the canonical
    /// names.
    fn default() -> Self {
        let mut map = IndexMap::new();
        map.insert("Hope_speech".to_string(), ClassLabel::HopeSpeech);
        map.insert("Non_hope_speech".to_string(), ClassLabel::NonHopeSpeech);
        map.insert("not-English".to_string(), ClassLabel::NonEnglish);
        for label in ClassLabel::ALL {
            map.insert(label.as_str().to_string(), label);
        }
        LabelMap(map)
    }
}

/// How a TSV split is laid out on disk.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusFormat {
    #[serde(default)]
    pub label_map: LabelMap,
    /// Exact text of an optional header line to skip.
    #[serde(default)]
    pub header: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub split: Split,
    pub task_mode: TaskMode,
    pub documents: Vec<Document>,
}

impl LabeledCorpus {
    /// Builds a corpus from `(text, label)` pairs, assigning ids in order.
    pub fn from_pairs<S: Into<String>>(
        split: Split,
        task_mode: TaskMode,
        pairs: impl IntoIterator<Item = (S, ClassLabel)>,
    ) -> Self {
        let documents = pairs
            .into_iter()
            .enumerate()
            .map(|(id, (text, label))| Document { id, text: text.into(), label })
            .collect();
        LabeledCorpus { split, task_mode, documents }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("empty corpus")]
    Empty,
    #[error("malformed line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unmapped labels on lines {}: {}", fmt_lines(.lines), .labels.join(", "))]
    UnmappedLabels { lines: Vec<usize>, labels: Vec<String> },
    #[error("label {label} is not legal in {mode:?} mode")]
    IllegalLabel { label: ClassLabel, mode: TaskMode },
}

fn fmt_lines(lines: &[usize]) -> String {
    lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
}

/// Loads one split from a `text<TAB>label` file.
pub fn load_corpus(
    path: &Path,
    split: Split,
    task_mode: TaskMode,
    format: &CorpusFormat,
) -> Result<LabeledCorpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    parse_corpus(&content, split, task_mode, format)
}

/// Parses TSV content already in memory. See [`load_corpus`].
pub fn parse_corpus(
    content: &str,
    split: Split,
    task_mode: TaskMode,
    format: &CorpusFormat,
) -> Result<LabeledCorpus, CorpusError> {
    let mut pairs = Vec::new();
    let mut unmapped_lines = Vec::new();
    let mut unmapped_labels: Vec<String> = Vec::new();

    for (idx, raw_line) in content.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if idx == 0 && format.header.as_deref() == Some(line) {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        // Labels never contain tabs, so split on the last one.
        let Some((text, raw_label)) = line.rsplit_once('\t') else {
            return Err(CorpusError::Malformed { line: line_no, reason: "expected text<TAB>label".into() });
        };
        if text.trim().is_empty() {
            return Err(CorpusError::Malformed { line: line_no, reason: "empty text".into() });
        }
        let raw_label = raw_label.trim();
        match format.label_map.get(raw_label) {
            Some(label) if task_mode.allows(label) => pairs.push((text.to_string(), label)),
            Some(_) => {}
            None => {
                unmapped_lines.push(line_no);
                if !unmapped_labels.iter().any(|l| l == raw_label) {
                    unmapped_labels.push(raw_label.to_string());
                }
            }
        }
    }

    if !unmapped_lines.is_empty() {
        return Err(CorpusError::UnmappedLabels { lines: unmapped_lines, labels: unmapped_labels });
    }
    if pairs.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(LabeledCorpus::from_pairs(split, task_mode, pairs))
}

/// Writes the corpus back as TSV using the first raw label bound to each class.
pub fn write_corpus<W: Write>(corpus: &LabeledCorpus, label_map: &LabelMap, mut out: W) -> io::Result<()> {
    for doc in &corpus.documents {
        writeln!(out, "{}\t{}", doc.text, label_map.raw_for(doc.label))?;
    }
    out.flush()
}

/// Per-class document counts, with every [`ClassLabel`] present (zeros included).
pub fn class_counts(corpus: &LabeledCorpus) -> BTreeMap<ClassLabel, usize> {
    let mut counts: BTreeMap<ClassLabel, usize> = ClassLabel::ALL.into_iter().map(|c| (c, 0)).collect();
    for doc in &corpus.documents {
        *counts.entry(doc.label).or_default() += 1;
    }
    counts
}

/// Concatenates splits for whole-dataset statistics. Ids are reassigned.
pub fn concat(split: Split, parts: &[&LabeledCorpus]) -> LabeledCorpus {
    let task_mode = parts.first().map(|c| c.task_mode).unwrap_or(TaskMode::ThreeWay);
    LabeledCorpus::from_pairs(
        split,
        task_mode,
        parts.iter().flat_map(|c| c.documents.iter().map(|d| (d.text.clone(), d.label))),
    )
}
