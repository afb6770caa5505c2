//! Random word insertion, swap and deletion, and minority-class rebalancing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{class_counts, ClassLabel, Document, LabeledCorpus};
use crate::textproc::{Normalizer, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Insertion,
    Swap,
    Deletion,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 3] = [AugmentOp::Insertion, AugmentOp::Swap, AugmentOp::Deletion];

    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentOp::Insertion => "insertion",
            AugmentOp::Swap => "swap",
            AugmentOp::Deletion => "deletion",
        }
    }
}

impl fmt::Display for AugmentOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AugmentOp::ALL.into_iter().find(|o| o.as_str() == s).ok_or_else(|| format!("unknown augmentation op '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub ops_enabled: Vec<AugmentOp>,
    /// Fraction of tokens perturbed per copy, and the deletion probability.
    pub alpha: f64,
    /// Desired per-class counts. Empty means every augmentable class is
    /// raised to the majority-class count.
    pub target_counts: BTreeMap<ClassLabel, usize>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { ops_enabled: AugmentOp::ALL.to_vec(), alpha: 0.1, target_counts: BTreeMap::new(), seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("deletion probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("cannot augment an empty corpus")]
    EmptyCorpus,
    #[error("target {target} for {label} is below its current count {current}")]
    TargetBelowCurrent { label: ClassLabel, target: usize, current: usize },
    #[error("the {0} class is never augmented")]
    NonEnglishTarget(ClassLabel),
    #[error("no {0} documents to draw augmented copies from")]
    NoOriginals(ClassLabel),
}

/// Exchanges positions `i` and `j`.
pub fn swap_at(tokens: &TokenSeq, i: usize, j: usize) -> TokenSeq {
    let mut out = tokens.clone();
    out.0.swap(i, j);
    out
}

/// `n_ops` swaps of two distinct uniformly drawn positions. Shorter than two tokens is returned as-is.
pub fn random_swap<R: Rng + ?Sized>(tokens: &TokenSeq, n_ops: usize, rng: &mut R) -> TokenSeq {
    let mut out = tokens.clone();
    let len = out.len();
    if len < 2 {
        return out;
    }
    for _ in 0..n_ops {
        let i = rng.random_range(0..len);
        let mut j = rng.random_range(0..len - 1);
        if j >= i {
            j += 1;
        }
        out.0.swap(i, j);
    }
    out
}

/// Drops each token with probability `p`; a non-empty input always keeps at least one token.
pub fn random_deletion<R: Rng + ?Sized>(tokens: &TokenSeq, p: f64, rng: &mut R) -> Result<TokenSeq, AugmentError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AugmentError::InvalidProbability(p));
    }
    if tokens.is_empty() {
        return Ok(tokens.clone());
    }
    let kept: Vec<String> = tokens.iter().filter(|_| rng.random::<f64>() >= p).cloned().collect();
    if kept.is_empty() {
        let k = rng.random_range(0..tokens.len());
        return Ok(TokenSeq(vec![tokens.0[k].clone()]));
    }
    Ok(TokenSeq(kept))
}

/// `n_ops` times, copies a uniformly drawn token of the current sequence to a uniformly drawn position.
pub fn random_insertion<R: Rng + ?Sized>(tokens: &TokenSeq, n_ops: usize, rng: &mut R) -> TokenSeq {
    let mut out = tokens.clone();
    if out.is_empty() {
        return out;
    }
    for _ in 0..n_ops {
        let word = out.0[rng.random_range(0..out.len())].clone();
        let at = rng.random_range(0..=out.len());
        out.0.insert(at, word);
    }
    out
}

/// Applies one operator with the per-copy budget `max(1, round(alpha * len))`.
pub fn apply_op<R: Rng + ?Sized>(
    op: AugmentOp,
    tokens: &TokenSeq,
    alpha: f64,
    rng: &mut R,
) -> Result<TokenSeq, AugmentError> {
    let n_ops = ((alpha * tokens.len() as f64).round() as usize).max(1);
    match op {
        AugmentOp::Insertion => Ok(random_insertion(tokens, n_ops, rng)),
        AugmentOp::Swap => Ok(random_swap(tokens, n_ops, rng)),
        AugmentOp::Deletion => random_deletion(tokens, alpha, rng),
    }
}

impl AugmentConfig {
    fn validate(&self) -> Result<(), AugmentError> {
        if self.ops_enabled.is_empty() {
            return Err(AugmentError::InvalidConfig("ops_enabled is empty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AugmentError::InvalidConfig(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// The targets used for `corpus`: the explicit map, or the majority count
    /// for every class other than NonEnglish.
    pub fn resolved_targets(&self, corpus: &LabeledCorpus) -> BTreeMap<ClassLabel, usize> {
        if !self.target_counts.is_empty() {
            return self.target_counts.clone();
        }
        let counts = class_counts(corpus);
        let majority = counts.values().copied().max().unwrap_or(0);
        counts
            .into_iter()
            .filter(|&(l, c)| l != ClassLabel::NonEnglish && c > 0 && corpus.task_mode.allows(l))
            .map(|(l, _)| (l, majority))
            .collect()
    }
}

/// Appends augmented copies until each targeted class reaches its count.
///
/// Classes are processed in [`ClassLabel`] order from a single rng stream.
/// Copies cycle over the class's originals in file order, each taking one
/// uniformly chosen enabled operator. New documents get ids continuing after
/// the largest existing id.
pub fn balance_classes(corpus: &LabeledCorpus, cfg: &AugmentConfig) -> Result<LabeledCorpus, AugmentError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(AugmentError::EmptyCorpus);
    }
    let counts = class_counts(corpus);
    let targets = cfg.resolved_targets(corpus);
    for (&label, &target) in &targets {
        let current = counts[&label];
        if target < current {
            return Err(AugmentError::TargetBelowCurrent { label, target, current });
        }
        if target > current && label == ClassLabel::NonEnglish {
            return Err(AugmentError::NonEnglishTarget(label));
        }
        if target > current && current == 0 {
            return Err(AugmentError::NoOriginals(label));
        }
        if target > current && !corpus.task_mode.allows(label) {
            return Err(AugmentError::InvalidConfig(format!("{label} is not part of this task")));
        }
    }

    let normalizer = Normalizer::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = corpus.clone();
    let mut next_id = corpus.documents.iter().map(|d| d.id + 1).max().unwrap_or(0);
    for (&label, &target) in &targets {
        let originals: Vec<&Document> = corpus.documents.iter().filter(|d| d.label == label).collect();
        let deficit = target - counts[&label];
        for c in 0..deficit {
            let source = originals[c % originals.len()];
            let tokens = normalizer.tokenize(&source.text);
            let op = cfg.ops_enabled[rng.random_range(0..cfg.ops_enabled.len())];
            let augmented = apply_op(op, &tokens, cfg.alpha, &mut rng)?;
            let text = if augmented.is_empty() { source.text.clone() } else { augmented.join() };
            out.documents.push(Document { id: next_id, text, label });
            next_id += 1;
        }
    }
    Ok(out)
}
