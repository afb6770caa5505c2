//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{softmax_in_place, ModelError, TrainingData};
use crate::features::RowView;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    /// Per-class feature means, `K x D`.
    pub theta: Vec<Vec<f64>>,
    /// Per-class feature variances including `epsilon`, `K x D`.
    pub var: Vec<Vec<f64>>,
    pub log_prior: Vec<f64>,
    pub epsilon: f64,
}

impl GnbParams {
    /// Unnormalised log posterior of each class.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.var)
            .zip(&self.log_prior)
            .map(|((mu, var), lp)| {
                let mut ll = *lp;
                for ((xi, m), v) in x.iter().zip(mu).zip(var) {
                    ll -= 0.5 * (2.0 * std::f64::consts::PI * v).ln() + 0.5 * (xi - m) * (xi - m) / v;
                }
                ll
            })
            .collect()
    }

    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        let dense = x.to_dense(self.theta[0].len());
        out.copy_from_slice(&self.joint_log_likelihood(&dense));
        softmax_in_place(out);
    }
}

pub(crate) fn train(data: &TrainingData<'_>, hp: &Params<'_>) -> Result<GnbParams, ModelError> {
    let var_smoothing = hp.f64("var_smoothing", 1e-9)?;
    if var_smoothing < 0.0 {
        return Err(ModelError::InvalidParam("gnb: var_smoothing must be non-negative".into()));
    }
    let counts = data.class_counts();
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(ModelError::Data(format!("gnb: class {} has no training rows", data.classes[i])));
    }
    let (n, d, k) = (data.n(), data.d(), data.k());

    let mut theta = vec![vec![0.0; d]; k];
    let mut overall_mean = vec![0.0; d];
    for (i, row) in data.x.rows().enumerate() {
        row.add_scaled_to(1.0 / counts[data.y[i]] as f64, &mut theta[data.y[i]]);
        row.add_scaled_to(1.0 / n as f64, &mut overall_mean);
    }
    let mut var = vec![vec![0.0; d]; k];
    let mut overall_var = vec![0.0; d];
    for (i, row) in data.x.rows().enumerate() {
        let c = data.y[i];
        let dense = row.to_dense(d);
        for j in 0..d {
            let dc = dense[j] - theta[c][j];
            var[c][j] += dc * dc / counts[c] as f64;
            let dm = dense[j] - overall_mean[j];
            overall_var[j] += dm * dm / n as f64;
        }
    }
    let epsilon = var_smoothing * overall_var.iter().copied().fold(0.0, f64::max);
    for v in var.iter_mut().flatten() {
        *v += epsilon;
    }
    if let Some((c, j)) = (0..k).flat_map(|c| (0..d).map(move |j| (c, j))).find(|&(c, j)| var[c][j] <= 0.0) {
        return Err(ModelError::Data(format!(
            "gnb: feature {j} has zero variance in class {} and var_smoothing gives no floor",
            data.classes[c]
        )));
    }
    let log_prior = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
    Ok(GnbParams { theta, var, log_prior, epsilon })
}
