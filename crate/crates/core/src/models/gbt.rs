//! Second-order gradient boosting of regression trees on the softmax loss.

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::tree::midpoint;
use super::{softmax_in_place, ModelError, TrainingData};
use crate::features::{FeatureMatrix, RowView};

const MIN_HESSIAN: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegNode {
    /// Unscaled leaf weight `−G / (H + λ)`.
    Leaf {
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, x: RowView<'_>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                RegNode::Leaf { weight } => return *weight,
                RegNode::Split { feature, threshold, left, right } => {
                    at = if x.value(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_classes: usize,
    pub learning_rate: f64,
    /// `rounds x classes` trees.
    pub trees: Vec<Vec<RegTree>>,
    /// Mean training log-loss after each round.
    pub train_logloss: Vec<f64>,
}

impl GbtParams {
    pub fn raw_scores(&self, x: RowView<'_>) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for round in &self.trees {
            for (sc, t) in s.iter_mut().zip(round) {
                *sc += self.learning_rate * t.predict(x);
            }
        }
        s
    }

    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        out.copy_from_slice(&self.raw_scores(x));
        softmax_in_place(out);
    }
}

struct RegBuilder<'a> {
    x: &'a FeatureMatrix,
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    min_child_weight: f64,
    max_depth: usize,
    nodes: Vec<RegNode>,
}

impl RegBuilder<'_> {
    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (g, h) = self.sums(&rows);
        let at = self.nodes.len();
        self.nodes.push(RegNode::Leaf { weight: -g / (h + self.lambda) });
        if depth >= self.max_depth || rows.len() < 2 {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&rows, g, h) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = RegNode::Split { feature, threshold, left, right };
        at
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<(usize, f64)> {
        let lam = self.lambda;
        let parent = g * g / (h + lam);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for f in 0..self.x.n_cols() {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.x.get(i, f), i)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for p in 0..pairs.len() - 1 {
                let (v, i) = pairs[p];
                gl += self.g[i];
                hl += self.h[i];
                let next = pairs[p + 1].0;
                if next == v {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.min_child_weight || hr < self.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent);
                if gain > 0.0 && best.is_none_or(|(b, _, _)| gain > b) {
                    best = Some((gain, f, midpoint(v, next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn mean_logloss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    scores.iter().zip(y).map(|(s, &c)| super::log_sum_exp(s) - s[c]).sum::<f64>() / y.len() as f64
}

pub(crate) fn train(data: &TrainingData<'_>, hp: &Params<'_>) -> Result<GbtParams, ModelError> {
    let n_estimators = hp.usize("n_estimators", 100)?;
    let max_depth = hp.usize("max_depth", 6)?;
    let learning_rate = hp.positive_f64("learning_rate", 0.1)?;
    let lambda = hp.f64("lambda", 1.0)?;
    let min_child_weight = hp.f64("min_child_weight", 1.0)?;
    if lambda < 0.0 || min_child_weight < 0.0 {
        return Err(ModelError::InvalidParam("gbt: lambda and min_child_weight must be non-negative".into()));
    }
    let (n, k) = (data.n(), data.k());
    let all: Vec<usize> = (0..n).collect();
    let mut scores = vec![vec![0.0; k]; n];
    let mut trees = Vec::with_capacity(n_estimators);
    let mut train_logloss = Vec::with_capacity(n_estimators);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..n_estimators {
        let probs: Vec<Vec<f64>> = scores
            .iter()
            .map(|s| {
                let mut p = s.clone();
                softmax_in_place(&mut p);
                p
            })
            .collect();
        let mut round = Vec::with_capacity(k);
        for c in 0..k {
            for i in 0..n {
                let p = probs[i][c];
                g[i] = p - if data.y[i] == c { 1.0 } else { 0.0 };
                h[i] = (p * (1.0 - p)).max(MIN_HESSIAN);
            }
            let mut b = RegBuilder { x: data.x, g: &g, h: &h, lambda, min_child_weight, max_depth, nodes: Vec::new() };
            b.grow(all.clone(), 0);
            round.push(RegTree { nodes: b.nodes });
        }
        for (i, s) in scores.iter_mut().enumerate() {
            for (sc, t) in s.iter_mut().zip(&round) {
                *sc += learning_rate * t.predict(data.x.row(i));
            }
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::Diverged { epoch: trees.len() + 1 });
        }
        trees.push(round);
        train_logloss.push(mean_logloss(&scores, &data.y));
    }
    Ok(GbtParams { n_classes: k, learning_rate, trees, train_logloss })
}
