//! Multinomial logistic regression with L-BFGS or proximal-gradient solvers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{softmax_in_place, ModelError, TrainingData};
use crate::features::{FeatureMatrix, RowView};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// `K x D`
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
}

impl LogRegParams {
    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        for ((o, w), b) in out.iter_mut().zip(&self.weights).zip(&self.intercepts) {
            *o = x.dot(w) + b;
        }
        softmax_in_place(out);
    }
}

/// Cross-entropy summed over rows plus `(1/C) * ½‖W‖²` when `l2` is set.
///
/// `theta` packs the `K x D` weights row-major followed by the `K`
/// intercepts; intercepts are never penalized. Returns `(loss, gradient)`.
pub fn logreg_objective(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    theta: &[f64],
    c: f64,
    l2: bool,
) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let k = n_classes;
    let (w, b) = theta.split_at(k * d);
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (row, &yi) in x.rows().zip(y) {
        for c in 0..k {
            z[c] = row.dot(&w[c * d..(c + 1) * d]) + b[c];
        }
        loss += super::log_sum_exp(&z) - z[yi];
        softmax_in_place(&mut z);
        for c in 0..k {
            let r = z[c] - if c == yi { 1.0 } else { 0.0 };
            row.add_scaled_to(r, &mut grad[c * d..(c + 1) * d]);
            grad[k * d + c] += r;
        }
    }
    if l2 {
        let inv_c = 1.0 / c;
        loss += 0.5 * inv_c * w.iter().map(|v| v * v).sum::<f64>();
        grad[..k * d].iter_mut().zip(w).for_each(|(g, v)| *g += inv_c * v);
    }
    (loss, grad)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct SolverResult {
    theta: Vec<f64>,
    n_iter: usize,
    converged: bool,
}

fn lbfgs(f: impl Fn(&[f64]) -> (f64, Vec<f64>), x0: Vec<f64>, max_iter: usize, tol: f64) -> SolverResult {
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iter = 0;
    while iter < max_iter {
        if norm_inf(&g) <= tol {
            return SolverResult { theta: x, n_iter: iter, converged: true };
        }
        iter += 1;

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = history.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = if history.is_empty() { (1.0 / dot(&g, &g).sqrt()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let converged = norm_inf(&g) <= tol;
    SolverResult { theta: x, n_iter: iter, converged }
}

/// Accelerated proximal gradient with backtracking; the L1 term is handled
/// by soft-thresholding the weights (never the intercepts).
fn proximal(
    smooth: impl Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    n_weights: usize,
    l1_strength: f64,
    max_iter: usize,
    tol: f64,
) -> SolverResult {
    let prox = |v: &mut [f64], t: f64| {
        if l1_strength > 0.0 {
            let thr = t * l1_strength;
            for w in &mut v[..n_weights] {
                *w = w.signum() * (w.abs() - thr).max(0.0);
            }
        }
    };
    let l1 = |v: &[f64]| l1_strength * v[..n_weights].iter().map(|w| w.abs()).sum::<f64>();

    let mut x = x0.clone();
    let mut fx_total = smooth(&x).0 + l1(&x);
    let mut z = x0;
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter {
        iter += 1;
        let (fz, gz) = smooth(&z);
        let (xn, fxn_smooth) = loop {
            let mut cand: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| zi - gi / lipschitz).collect();
            prox(&mut cand, 1.0 / lipschitz);
            let (fc, _) = smooth(&cand);
            let diff: Vec<f64> = cand.iter().zip(&z).map(|(a, b)| a - b).collect();
            let bound = fz + dot(&gz, &diff) + 0.5 * lipschitz * dot(&diff, &diff);
            if fc <= bound + 1e-12 * fz.abs().max(1.0) || lipschitz > 1e20 {
                break (cand, fc);
            }
            lipschitz *= 2.0;
        };
        let mapping = norm_inf(&z.iter().zip(&xn).map(|(a, b)| lipschitz * (a - b)).collect::<Vec<_>>());
        let fxn_total = fxn_smooth + l1(&xn);
        if fxn_total > fx_total {
            // Restart momentum from the last iterate.
            t = 1.0;
            z = x.clone();
            continue;
        }
        if mapping <= tol {
            x = xn;
            converged = true;
            break;
        }
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / tn;
        z = xn.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
        x = xn;
        fx_total = fxn_total;
        t = tn;
    }
    SolverResult { theta: x, n_iter: iter, converged }
}

pub(crate) fn train(
    data: &TrainingData<'_>,
    hp: &Params<'_>,
    warnings: &mut Vec<String>,
) -> Result<LogRegParams, ModelError> {
    let penalty = hp.choice("penalty", "l2", &["l1", "l2"])?;
    let c = hp.positive_f64("C", 1.0)?;
    let solver = hp.choice("solver", "lbfgs", &["lbfgs", "liblinear"])?;
    let max_iter = hp.usize("max_iter", 100)?;
    let tol = hp.positive_f64("tol", 1e-6)?;
    if penalty == "l1" && solver == "lbfgs" {
        return Err(ModelError::InvalidCombination("l1 penalty requires the liblinear (proximal) solver".into()));
    }
    data.require_two_labels("logistic regression")?;

    let (k, d) = (data.k(), data.d());
    let l2 = penalty == "l2";
    let objective = |theta: &[f64]| logreg_objective(data.x, &data.y, k, theta, c, l2);
    let theta0 = vec![0.0; k * (d + 1)];
    let result = if solver == "lbfgs" {
        lbfgs(objective, theta0, max_iter, tol)
    } else {
        let l1_strength = if l2 { 0.0 } else { 1.0 / c };
        proximal(objective, theta0, k * d, l1_strength, max_iter, tol)
    };
    if !result.converged {
        warnings.push(format!("logreg: {solver} stopped after {} iterations above tol {tol}", result.n_iter));
    }
    let weights = result.theta[..k * d].chunks(d).map(<[f64]>::to_vec).collect();
    let intercepts = result.theta[k * d..].to_vec();
    Ok(LogRegParams { weights, intercepts, n_iter: result.n_iter, converged: result.converged })
}
