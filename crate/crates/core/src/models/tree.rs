//! CART classification trees with weighted Gini splits.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::argmax;
use crate::features::{FeatureMatrix, RowView};

/// Minimum impurity decrease for a split to be accepted.
const MIN_DECREASE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Weighted class distribution of the training rows reaching this leaf.
    Leaf { value: Vec<f64> },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: RowView<'_>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x.value(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_class(&self, x: RowView<'_>) -> usize {
        argmax(self.leaf_value(x))
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CartSettings {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per node; `>= d` means all, in column order.
    pub max_features: usize,
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [usize],
    weights: &'a [f64],
    k: usize,
    s: CartSettings,
    nodes: Vec<Node>,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Threshold between two consecutive distinct sorted values.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl Builder<'_> {
    fn distribution(&self, samples: &[usize]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.k];
        for &i in samples {
            counts[self.y[i]] += self.weights[i];
        }
        let total = counts.iter().sum();
        (counts, total)
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (counts, total) = self.distribution(&samples);
        let impurity = gini(&counts, total);
        let at = self.nodes.len();
        let value: Vec<f64> = counts.iter().map(|c| if total > 0.0 { c / total } else { 0.0 }).collect();
        self.nodes.push(Node::Leaf { value });
        let depth_ok = self.s.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || samples.len() < self.s.min_samples_split.max(2) || impurity <= MIN_DECREASE {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&samples, impurity, total, rng) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.into_iter().partition(|&i| self.x.get(i, feature) <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }

    fn best_split(&self, samples: &[usize], parent: f64, total: f64, rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let d = self.x.n_cols();
        let features: Vec<usize> =
            if self.s.max_features >= d { (0..d).collect() } else { sample(rng, d, self.s.max_features).into_vec() };
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for &f in &features {
            pairs.clear();
            pairs.extend(samples.iter().map(|&i| (self.x.get(i, f), i)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            let mut left = vec![0.0; self.k];
            let mut right = self.distribution(samples).0;
            let mut wl = 0.0;
            for p in 0..pairs.len() - 1 {
                let (v, i) = pairs[p];
                let w = self.weights[i];
                left[self.y[i]] += w;
                right[self.y[i]] -= w;
                wl += w;
                let next = pairs[p + 1].0;
                if next == v {
                    continue;
                }
                let wr = total - wl;
                let child = (wl * gini(&left, wl) + wr * gini(&right, wr)) / total;
                if child < parent - MIN_DECREASE && best.is_none_or(|(b, _, _)| child < b) {
                    best = Some((child, f, midpoint(v, next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Grows a tree on `samples` (row indices, repeats allowed) with per-row `weights`.
pub(crate) fn grow_tree(
    x: &FeatureMatrix,
    y: &[usize],
    k: usize,
    weights: &[f64],
    samples: Vec<usize>,
    settings: CartSettings,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut b = Builder { x, y, weights, k, s: settings, nodes: Vec::new() };
    b.grow(samples, 0, rng);
    Tree { nodes: b.nodes }
}
