//! Random forest of CART trees with per-node feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamValue, Params};
use super::tree::{grow_tree, CartSettings, Tree};
use super::{ModelError, TrainingData};
use crate::features::RowView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_classes: usize,
    pub max_features: usize,
    pub trees: Vec<Tree>,
}

impl ForestParams {
    /// Fraction of trees voting for each class.
    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.trees {
            out[t.predict_class(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
}

fn max_features(hp: &Params<'_>, d: usize) -> Result<usize, ModelError> {
    let sqrt = || ((d as f64).sqrt() as usize).max(1);
    match hp.raw("max_features") {
        None => Ok(sqrt()),
        Some(ParamValue::Null) => Ok(d),
        Some(ParamValue::Text(_)) => Ok(match hp.choice("max_features", "sqrt", &["sqrt", "log2", "all"])?.as_str() {
            "log2" => ((d as f64).log2() as usize).max(1),
            "all" => d,
            _ => sqrt(),
        }),
        Some(ParamValue::Float(f)) if *f > 0.0 && *f <= 1.0 && f.fract() != 0.0 => Ok(((f * d as f64) as usize).max(1)),
        Some(_) => {
            let m = hp.usize("max_features", d)?;
            if m == 0 {
                return Err(hp.invalid("max_features", "positive"));
            }
            Ok(m.min(d))
        }
    }
}

pub(crate) fn train(data: &TrainingData<'_>, hp: &Params<'_>, seed: u64) -> Result<ForestParams, ModelError> {
    let n_estimators = hp.usize("n_estimators", 100)?;
    if n_estimators == 0 {
        return Err(hp.invalid("n_estimators", "at least 1"));
    }
    let max_depth = hp.opt_usize("max_depth", None)?;
    let settings = CartSettings {
        max_depth,
        min_samples_split: hp.usize("min_samples_split", 2)?,
        max_features: max_features(hp, data.d())?,
    };
    let bootstrap = hp.bool("bootstrap", true)?;
    let n = data.n();
    let weights = vec![1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_estimators)
        .map(|_| {
            let samples: Vec<usize> =
                if bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            grow_tree(data.x, &data.y, data.k(), &weights, samples, settings, &mut rng)
        })
        .collect();
    Ok(ForestParams { n_classes: data.k(), max_features: settings.max_features, trees })
}
