//! Fully connected network with softmax output trained by mini-batch Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{argmax, softmax_in_place, ModelError, TrainingData};
use crate::features::{FeatureMatrix, RowView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Logistic,
    Tanh,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`.
    fn derivative(&self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out x n_in`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub activation: Activation,
    pub layers: Vec<Layer>,
    pub epochs: usize,
    pub stopped_early: bool,
    pub best_validation_score: Option<f64>,
}

impl MlpParams {
    /// Glorot-uniform initialisation for layer sizes `[input, hidden.., output]`.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factor = if activation == Activation::Logistic { 2.0 } else { 6.0 };
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (factor / (n_in + n_out) as f64).sqrt();
                let mut draw = || rng.random_range(-bound..bound);
                let weights = (0..n_in * n_out).map(|_| draw()).collect();
                let biases = (0..n_out).map(|_| draw()).collect();
                Layer { n_in, n_out, weights, biases }
            })
            .collect();
        MlpParams { activation, layers, epochs: 0, stopped_early: false, best_validation_score: None }
    }

    /// Layer activations for one row; the last entry holds class probabilities.
    fn forward(&self, x: RowView<'_>) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z: Vec<f64> = match l {
                0 => (0..layer.n_out)
                    .map(|j| x.dot(&layer.weights[j * layer.n_in..(j + 1) * layer.n_in]) + layer.biases[j])
                    .collect(),
                _ => {
                    let prev = &acts[l - 1];
                    (0..layer.n_out)
                        .map(|j| {
                            let w = &layer.weights[j * layer.n_in..(j + 1) * layer.n_in];
                            w.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>() + layer.biases[j]
                        })
                        .collect()
                }
            };
            if l == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        let acts = self.forward(x);
        out.copy_from_slice(acts.last().expect("network has layers"));
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened as `[W0, b0, W1, b1, ..]`.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = it.next().expect("length"));
        }
    }

    /// Mean cross-entropy over the rows plus `alpha / (2n) * Σ‖W‖²`, and
    /// its gradient in [`flat_params`](Self::flat_params) order.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, y: &[usize], alpha: f64) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..y.len()).collect();
        let mut grads = self.zero_grads();
        let loss = self.accumulate(x, y, &idx, alpha, &mut grads);
        (loss, grads.into_iter().flatten().collect())
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| vec![0.0; l.weights.len() + l.biases.len()]).collect()
    }

    /// Writes the batch gradient into `grads` (one flat `[W, b]` buffer per layer) and returns the loss.
    fn accumulate(&self, x: &FeatureMatrix, y: &[usize], idx: &[usize], alpha: f64, grads: &mut [Vec<f64>]) -> f64 {
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        let n = idx.len() as f64;
        let mut loss = 0.0;
        for &i in idx {
            let row = x.row(i);
            let acts = self.forward(row);
            let probs = acts.last().expect("layers");
            loss -= probs[y[i]].max(1e-300).ln();
            let mut delta: Vec<f64> = probs.clone();
            delta[y[i]] -= 1.0;
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let (gw, gb) = grads[l].split_at_mut(layer.weights.len());
                for (j, &dj) in delta.iter().enumerate() {
                    gb[j] += dj / n;
                    let gw_row = &mut gw[j * layer.n_in..(j + 1) * layer.n_in];
                    if l == 0 {
                        row.add_scaled_to(dj / n, gw_row);
                    } else {
                        gw_row.iter_mut().zip(&acts[l - 1]).for_each(|(g, a)| *g += dj * a / n);
                    }
                }
                if l > 0 {
                    let prev = &acts[l - 1];
                    let mut next = vec![0.0; layer.n_in];
                    for (j, &dj) in delta.iter().enumerate() {
                        let w = &layer.weights[j * layer.n_in..(j + 1) * layer.n_in];
                        next.iter_mut().zip(w).for_each(|(o, wv)| *o += dj * wv);
                    }
                    next.iter_mut().zip(prev).for_each(|(o, a)| *o *= self.activation.derivative(*a));
                    delta = next;
                }
            }
        }
        let mut penalty = 0.0;
        for (layer, g) in self.layers.iter().zip(grads.iter_mut()) {
            penalty += layer.weights.iter().map(|w| w * w).sum::<f64>();
            g[..layer.weights.len()].iter_mut().zip(&layer.weights).for_each(|(gv, w)| *gv += alpha * w / n);
        }
        loss / n + 0.5 * alpha * penalty / n
    }

    fn accuracy(&self, x: &FeatureMatrix, y: &[usize], idx: &[usize]) -> f64 {
        let correct = idx.iter().filter(|&&i| argmax(self.forward(x.row(i)).last().expect("layers")) == y[i]).count();
        correct as f64 / idx.len() as f64
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, net: &mut MlpParams, grads: &[Vec<f64>]) {
        self.t += 1;
        let lr = self.lr * (1.0 - Self::BETA2.powi(self.t)).sqrt() / (1.0 - Self::BETA1.powi(self.t));
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let nw = layer.weights.len();
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            for (k, p) in params.enumerate() {
                let g = grads[l][k];
                let m = &mut self.m[l][k];
                let v = &mut self.v[l][k];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= lr * *m / (v.sqrt() + Self::EPS);
            }
            debug_assert_eq!(nw + layer.n_out, self.m[l].len());
        }
    }
}

pub(crate) fn train(
    data: &TrainingData<'_>,
    hp: &Params<'_>,
    seed: u64,
    warnings: &mut Vec<String>,
) -> Result<MlpParams, ModelError> {
    let activation = match hp.choice("activation", "relu", &["relu", "logistic", "tanh"])?.as_str() {
        "logistic" => Activation::Logistic,
        "tanh" => Activation::Tanh,
        _ => Activation::Relu,
    };
    let hidden = hp.usize_list("hidden_layer_sizes", &[150, 150])?;
    let lr = hp.positive_f64("learning_rate_init", 0.001)?;
    let max_iter = hp.usize("max_iter", 1000)?.max(1);
    let early_stopping = hp.bool("early_stopping", true)?;
    let alpha = hp.f64("alpha", 0.0001)?;
    let batch_size = hp.usize("batch_size", 32)?.max(1);
    let val_fraction = hp.f64("validation_fraction", 0.1)?;
    let patience = hp.usize("n_iter_no_change", 10)?.max(1);
    let tol = hp.f64("tol", 1e-4)?;
    if !(0.0..1.0).contains(&val_fraction) || alpha < 0.0 {
        return Err(ModelError::InvalidParam("mlp: validation_fraction in [0,1) and alpha >= 0 required".into()));
    }
    data.require_two_labels("mlp")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![data.d()];
    sizes.extend(&hidden);
    sizes.push(data.k());
    let mut net = MlpParams::init(&sizes, activation, rng.random());

    let mut all: Vec<usize> = (0..data.n()).collect();
    let (mut train_idx, val_idx) = if early_stopping {
        all.shuffle(&mut rng);
        let n_val = ((data.n() as f64 * val_fraction).ceil() as usize).max(1);
        if n_val >= data.n() {
            return Err(ModelError::Data("mlp: too few rows to hold out a validation split".into()));
        }
        let val = all.split_off(data.n() - n_val);
        (all, val)
    } else {
        (all, Vec::new())
    };
    train_idx.sort_unstable();

    let mut adam = Adam { m: net.zero_grads(), v: net.zero_grads(), t: 0, lr };
    let mut grads = net.zero_grads();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_loss = f64::INFINITY;
    let mut best_net: Option<MlpParams> = None;
    let mut stale = 0;
    let mut epochs = 0;
    let mut stopped_early = false;

    for epoch in 1..=max_iter {
        epochs = epoch;
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(batch_size) {
            let loss = net.accumulate(data.x, &data.y, batch, alpha, &mut grads);
            total += loss * batch.len() as f64;
            adam.step(&mut net, &grads);
        }
        let epoch_loss = total / train_idx.len() as f64;
        if !epoch_loss.is_finite() || net.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Diverged { epoch });
        }
        let improved = if early_stopping {
            let score = net.accuracy(data.x, &data.y, &val_idx);
            let better = score > best_score + tol;
            if score > best_score {
                best_score = score;
                best_net = Some(net.clone());
            }
            better
        } else {
            let better = epoch_loss < best_loss - tol;
            best_loss = best_loss.min(epoch_loss);
            better
        };
        stale = if improved { 0 } else { stale + 1 };
        if stale >= patience {
            stopped_early = epoch < max_iter;
            break;
        }
    }
    if let Some(best) = best_net {
        net = best;
    }
    if !stopped_early {
        warnings.push(format!("mlp: reached max_iter={max_iter} without meeting the stopping criterion"));
    }
    net.epochs = epochs;
    net.stopped_early = stopped_early;
    net.best_validation_score = early_stopping.then_some(best_score);
    Ok(net)
}
