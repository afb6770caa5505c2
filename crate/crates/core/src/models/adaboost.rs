//! SAMME boosting over depth-1 CART stumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::Params;
use super::tree::{grow_tree, CartSettings, Tree};
use super::{ModelError, TrainingData};
use crate::features::RowView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_classes: usize,
    pub stumps: Vec<Tree>,
    pub alphas: Vec<f64>,
    /// Weighted training error of each kept stump at the time it was fitted.
    pub errors: Vec<f64>,
}

impl AdaBoostParams {
    /// Stump votes weighted by `alpha`, normalised by `Σ alpha`.
    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        let total: f64 = self.alphas.iter().sum();
        for (o, v) in out.iter_mut().zip(self.votes(x)) {
            *o = v / total;
        }
    }

    /// Ensemble score `f(x)` per class, before normalisation.
    pub fn votes(&self, x: RowView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            out[s.predict_class(x)] += a;
        }
        out
    }
}

pub(crate) fn train(data: &TrainingData<'_>, hp: &Params<'_>) -> Result<AdaBoostParams, ModelError> {
    let n_estimators = hp.usize("n_estimators", 50)?;
    if n_estimators == 0 {
        return Err(hp.invalid("n_estimators", "at least 1"));
    }
    let lr = hp.positive_f64("learning_rate", 1.0)?;
    let (n, k) = (data.n(), data.k());
    let settings = CartSettings { max_depth: Some(1), min_samples_split: 2, max_features: data.d() };
    // Stumps consider every feature, so the rng is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut w = vec![1.0 / n as f64; n];
    let mut out = AdaBoostParams { n_classes: k, stumps: Vec::new(), alphas: Vec::new(), errors: Vec::new() };
    for _ in 0..n_estimators {
        let stump = grow_tree(data.x, &data.y, k, &w, (0..n).collect(), settings, &mut rng);
        let wrong: Vec<bool> = (0..n).map(|i| stump.predict_class(data.x.row(i)) != data.y[i]).collect();
        let total: f64 = w.iter().sum();
        let err = wrong.iter().zip(&w).filter(|(m, _)| **m).map(|(_, wi)| wi).sum::<f64>() / total;
        if err <= 0.0 {
            out.stumps.push(stump);
            out.alphas.push(1.0);
            out.errors.push(err);
            break;
        }
        if err >= 1.0 - 1.0 / k as f64 {
            if out.stumps.is_empty() {
                out.stumps.push(stump);
                out.alphas.push(1.0);
                out.errors.push(err);
            }
            break;
        }
        let alpha = lr * (((1.0 - err) / err).ln() + ((k - 1) as f64).ln());
        for (wi, &m) in w.iter_mut().zip(&wrong) {
            if m {
                *wi *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        out.stumps.push(stump);
        out.alphas.push(alpha);
        out.errors.push(err);
    }
    Ok(out)
}
