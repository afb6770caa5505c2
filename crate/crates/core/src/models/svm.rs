//! Soft-margin kernel SVM solved by SMO with second-order working-set selection.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::params::{ParamValue, Params};
use super::{binary_scores_into, softmax_in_place, ModelError, TrainingData};
use crate::features::{FeatureMatrix, RowView};

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: u32,
}

impl Kernel {
    pub fn linear() -> Self {
        Kernel { kind: KernelKind::Linear, gamma: 1.0, coef0: 0.0, degree: 3 }
    }

    pub fn eval(&self, a: RowView<'_>, b: RowView<'_>) -> f64 {
        match self.kind {
            KernelKind::Rbf => self.eval_with_norms(a, b, a.squared_norm(), b.squared_norm()),
            _ => self.eval_with_norms(a, b, 0.0, 0.0),
        }
    }

    fn eval_with_norms(&self, a: RowView<'_>, b: RowView<'_>, na: f64, nb: f64) -> f64 {
        let dot = a.dot_row(&b);
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Poly => (self.gamma * dot + self.coef0).powi(self.degree as i32),
            KernelKind::Rbf => (-self.gamma * (na + nb - 2.0 * dot).max(0.0)).exp(),
            KernelKind::Sigmoid => (self.gamma * dot + self.coef0).tanh(),
        }
    }
}

/// Kernel rows computed on demand with a bounded FIFO cache.
struct KernelRows<'a> {
    x: &'a FeatureMatrix,
    kernel: Kernel,
    norms: Vec<f64>,
    cache: HashMap<usize, Rc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a FeatureMatrix, kernel: Kernel) -> Self {
        let norms = x.rows().map(|r| r.squared_norm()).collect();
        let capacity = (CACHE_BYTES / (8 * x.n_rows().max(1))).max(2);
        KernelRows { x, kernel, norms, cache: HashMap::new(), order: VecDeque::new(), capacity }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval_with_norms(self.x.row(i), self.x.row(j), self.norms[i], self.norms[j])
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = self.cache.get(&i) {
            return Rc::clone(r);
        }
        let r = Rc::new((0..self.x.n_rows()).map(|j| self.entry(i, j)).collect::<Vec<_>>());
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.order.push_back(i);
        self.cache.insert(i, Rc::clone(&r));
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// Dual objective `Σα − ½ αᵀQα` with `Q_ij = y_i y_j K_ij`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `max Σα − ½ αᵀQα` s.t. `0 ≤ α ≤ c`, `Σ y_i α_i = 0` for labels `y ∈ {−1, +1}`.
/// The decision function is `Σ α_j y_j K(x_j, x) − rho`.
pub fn smo_solve(
    x: &FeatureMatrix,
    y: &[f64],
    kernel: &Kernel,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SmoSolution, ModelError> {
    let n = x.n_rows();
    if y.len() != n || n == 0 {
        return Err(ModelError::Data(format!("smo: {n} rows but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ModelError::Data("smo: labels must be +1 or -1".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(ModelError::InvalidParam(format!("svm: C must be positive, got {c}")));
    }
    let mut rows = KernelRows::new(x, *kernel);
    let qd: Vec<f64> = (0..n).map(|i| rows.entry(i, i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let eligible = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if eligible && v >= gmax {
                gmax = v;
                gmax_idx = Some(t);
            }
        }
        let Some(i) = gmax_idx else {
            converged = true;
            break;
        };
        let ki = rows.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best: Option<(usize, f64)> = None;
        for t in 0..n {
            let eligible = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !eligible {
                continue;
            }
            let v = y[t] * grad[t];
            gmax2 = gmax2.max(v);
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * ki[t];
                let obj = -diff * diff / if quad > 0.0 { quad } else { TAU };
                if best.is_none_or(|(_, b)| obj <= b) {
                    best = Some((t, obj));
                }
            }
        }
        let Some((j, _)) = best.filter(|_| gmax + gmax2 >= tol) else {
            converged = true;
            break;
        };
        iterations += 1;
        let kj = rows.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let k_ij = ki[j];
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * (y[i] * y[j] * k_ij)).max(0.0);
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * k_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(SmoSolution { alpha, rho, objective, iterations, converged })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    /// Rows of the shared support matrix used by this machine.
    pub sv_index: Vec<usize>,
    /// `α_i y_i` for each entry of `sv_index`.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    pub support: FeatureMatrix,
    /// One machine for binary problems (positive = second class), else one per class.
    pub machines: Vec<BinaryMachine>,
}

impl SvmParams {
    pub fn decision_values(&self, x: RowView<'_>) -> Vec<f64> {
        let nx = x.squared_norm();
        let k: Vec<f64> =
            self.support.rows().map(|s| self.kernel.eval_with_norms(s, x, s.squared_norm(), nx)).collect();
        self.machines
            .iter()
            .map(|m| m.sv_index.iter().zip(&m.dual_coef).map(|(&i, a)| a * k[i]).sum::<f64>() - m.rho)
            .collect()
    }

    pub(crate) fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        let d = self.decision_values(x);
        if d.len() == 1 {
            binary_scores_into(d[0], out);
        } else {
            out.copy_from_slice(&d);
            softmax_in_place(out);
        }
    }
}

/// `1 / (D · Var(X))` over all entries, or 1 for constant input.
fn scale_gamma(x: &FeatureMatrix) -> f64 {
    let total = (x.n_rows() * x.n_cols()) as f64;
    let (mut sum, mut sq) = (0.0, 0.0);
    for r in x.rows() {
        match r {
            RowView::Dense(v) => v.iter().for_each(|a| {
                sum += a;
                sq += a * a;
            }),
            RowView::Sparse { values, .. } => values.iter().for_each(|a| {
                sum += a;
                sq += a * a;
            }),
        }
    }
    let mean = sum / total;
    let var = sq / total - mean * mean;
    if var > 0.0 {
        1.0 / (x.n_cols() as f64 * var)
    } else {
        1.0
    }
}

pub(crate) fn train(
    data: &TrainingData<'_>,
    hp: &Params<'_>,
    warnings: &mut Vec<String>,
) -> Result<SvmParams, ModelError> {
    let c = hp.f64("C", 1.0)?;
    if c <= 0.0 {
        return Err(ModelError::InvalidParam(format!("svm: C must be positive, got {c}")));
    }
    let kind = match hp.choice("kernel", "rbf", &["linear", "poly", "rbf", "sigmoid"])?.as_str() {
        "linear" => KernelKind::Linear,
        "poly" => KernelKind::Poly,
        "sigmoid" => KernelKind::Sigmoid,
        _ => KernelKind::Rbf,
    };
    let gamma = match hp.raw("gamma") {
        None | Some(ParamValue::Null) => scale_gamma(data.x),
        Some(ParamValue::Text(s)) if s == "scale" => scale_gamma(data.x),
        Some(ParamValue::Text(s)) if s == "auto" => 1.0 / data.d() as f64,
        Some(_) => hp.positive_f64("gamma", 1.0)?,
    };
    let degree = hp.usize("degree", 3)?;
    let kernel = Kernel { kind, gamma, coef0: hp.f64("coef0", 0.0)?, degree: degree as u32 };
    let tol = hp.positive_f64("tol", 1e-3)?;
    let max_iter = hp.usize("max_iter", 10_000_000usize.max(100 * data.n()))?.max(1);
    data.require_all_classes("svm")?;

    let positives: Vec<usize> = if data.k() == 2 { vec![1] } else { (0..data.k()).collect() };
    let mut solutions = Vec::with_capacity(positives.len());
    for &p in &positives {
        let y: Vec<f64> = data.y.iter().map(|&l| if l == p { 1.0 } else { -1.0 }).collect();
        let sol = smo_solve(data.x, &y, &kernel, c, tol, max_iter)?;
        if !sol.converged {
            warnings
                .push(format!("svm: SMO hit max_iter={max_iter} for class {} before reaching tol", data.classes[p]));
        }
        solutions.push((y, sol));
    }
    let used: Vec<usize> = (0..data.n()).filter(|&i| solutions.iter().any(|(_, s)| s.alpha[i] > 0.0)).collect();
    let mut position = vec![usize::MAX; data.n()];
    used.iter().enumerate().for_each(|(k, &i)| position[i] = k);
    let machines = solutions
        .into_iter()
        .map(|(y, s)| {
            let idx: Vec<usize> = (0..data.n()).filter(|&i| s.alpha[i] > 0.0).collect();
            BinaryMachine {
                sv_index: idx.iter().map(|&i| position[i]).collect(),
                dual_coef: idx.iter().map(|&i| s.alpha[i] * y[i]).collect(),
                rho: s.rho,
                iterations: s.iterations,
                converged: s.converged,
            }
        })
        .collect();
    warnings.push("svm: probabilities are a softmax of decision values and are not calibrated".into());
    Ok(SvmParams { kernel, c, support: data.x.select_rows(&used), machines })
}
