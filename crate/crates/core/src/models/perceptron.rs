//! Mistake-driven perceptron, one-vs-rest beyond two classes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{binary_scores_into, softmax_in_place, ModelError, TrainingData};
use crate::features::RowView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptronParams {
    /// One row for binary problems (positive = second class), else one per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Epochs run per sub-problem.
    pub epochs: Vec<usize>,
    /// Mistakes made during the last epoch of each sub-problem.
    pub final_epoch_mistakes: Vec<usize>,
}

impl PerceptronParams {
    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        if self.weights.len() == 1 {
            binary_scores_into(x.dot(&self.weights[0]) + self.intercepts[0], out);
        } else {
            for ((o, w), b) in out.iter_mut().zip(&self.weights).zip(&self.intercepts) {
                *o = x.dot(w) + b;
            }
            softmax_in_place(out);
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Penalty {
    None,
    L1,
    L2,
}

struct Settings {
    penalty: Penalty,
    alpha: f64,
    eta0: f64,
    max_iter: usize,
    n_iter_no_change: usize,
}

struct BinaryFit {
    w: Vec<f64>,
    b: f64,
    epochs: usize,
    last_mistakes: usize,
}

fn fit_binary(data: &TrainingData<'_>, positive: usize, s: &Settings, seed: u64) -> BinaryFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; data.d()];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut best = usize::MAX;
    let mut stale = 0;
    let mut epochs = 0;
    let mut last_mistakes = 0;
    let shrink = s.eta0 * s.alpha;
    for _ in 0..s.max_iter {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &i in &order {
            let row = data.x.row(i);
            let target = if data.y[i] == positive { 1.0 } else { -1.0 };
            let score = row.dot(&w) + b;
            match s.penalty {
                Penalty::None => {}
                Penalty::L2 => w.iter_mut().for_each(|v| *v *= (1.0 - shrink).max(0.0)),
                Penalty::L1 => w.iter_mut().for_each(|v| *v = v.signum() * (v.abs() - shrink).max(0.0)),
            }
            if target * score <= 0.0 {
                row.add_scaled_to(s.eta0 * target, &mut w);
                b += s.eta0 * target;
                mistakes += 1;
            }
        }
        last_mistakes = mistakes;
        if mistakes == 0 {
            break;
        }
        if mistakes < best {
            best = mistakes;
            stale = 0;
        } else {
            stale += 1;
            if stale >= s.n_iter_no_change {
                break;
            }
        }
    }
    BinaryFit { w, b, epochs, last_mistakes }
}

pub(crate) fn train(
    data: &TrainingData<'_>,
    hp: &Params<'_>,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<PerceptronParams, ModelError> {
    let penalty = match hp.choice("penalty", "none", &["none", "l1", "l2"])?.as_str() {
        "l1" => Penalty::L1,
        "l2" => Penalty::L2,
        _ => Penalty::None,
    };
    let settings = Settings {
        penalty,
        alpha: hp.f64("alpha", 0.0001)?,
        eta0: hp.positive_f64("eta0", 1.0)?,
        max_iter: hp.usize("max_iter", 1000)?.max(1),
        n_iter_no_change: hp.usize("n_iter_no_change", 5)?.max(1),
    };
    if settings.alpha < 0.0 {
        return Err(ModelError::InvalidParam("perceptron: alpha must be non-negative".into()));
    }
    data.require_all_classes("perceptron")?;

    let positives: Vec<usize> = if data.k() == 2 { vec![1] } else { (0..data.k()).collect() };
    let fits: Vec<BinaryFit> =
        positives.iter().map(|&p| fit_binary(data, p, &settings, seed.wrapping_add(p as u64))).collect();
    if fits.iter().any(|f| f.last_mistakes > 0) {
        warnings.push("perceptron: data not separated within the epoch budget".into());
    }
    Ok(PerceptronParams {
        epochs: fits.iter().map(|f| f.epochs).collect(),
        final_epoch_mistakes: fits.iter().map(|f| f.last_mistakes).collect(),
        intercepts: fits.iter().map(|f| f.b).collect(),
        weights: fits.into_iter().map(|f| f.w).collect(),
    })
}
