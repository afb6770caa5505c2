//! Grid enumeration and dev-split grid search.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;
use crate::features::FeatureMatrix;
use crate::metrics::{evaluate, EvalReport, Metric};
use crate::models::{legal_keys, predict, published_grid, train, Hyperparameters, ModelKind, ParamValue, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kind: ModelKind,
    /// Axes are enumerated in key order; the first axis varies slowest.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<ParamValue>>,
}

impl GridSpec {
    /// The published search space for `kind`.
    pub fn published(kind: ModelKind) -> Self {
        GridSpec { kind, axes: published_grid(kind) }
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        let legal = legal_keys(self.kind);
        for (k, v) in &self.axes {
            if !legal.contains(&k.as_str()) {
                return Err(TuningError::InvalidGrid(format!("{} does not accept '{k}'", self.kind)));
            }
            if v.is_empty() {
                return Err(TuningError::InvalidGrid(format!("axis '{k}' is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every grid combination is infeasible")]
    AllInfeasible,
    #[error("all {n} trials failed; first error: {first}")]
    AllTrialsFailed { n: usize, first: String },
    #[error("{0}")]
    Data(String),
    #[error("failed to write results: {0}")]
    Io(#[from] std::io::Error),
}

fn text(hp: &Hyperparameters, key: &str) -> Option<String> {
    match hp.get(key) {
        Some(ParamValue::Text(s)) => Some(s.to_lowercase()),
        _ => None,
    }
}

/// Whether a combination can be trained at all. Only l1 with the
/// quasi-Newton logistic-regression solver is ruled out.
pub fn is_feasible(kind: ModelKind, hp: &Hyperparameters) -> bool {
    if kind != ModelKind::Logreg {
        return true;
    }
    let penalty = text(hp, "penalty").unwrap_or_else(|| "l2".into());
    let solver = text(hp, "solver").unwrap_or_else(|| "lbfgs".into());
    !(penalty == "l1" && solver == "lbfgs")
}

/// Cartesian product of the axes with infeasible combinations removed.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<TrainConfig>, TuningError> {
    spec.validate()?;
    let mut combos: Vec<Hyperparameters> = vec![Hyperparameters::new()];
    for (key, values) in &spec.axes {
        combos = combos
            .into_iter()
            .flat_map(|base| {
                values.iter().map(move |v| {
                    let mut hp = base.clone();
                    hp.insert(key.clone(), v.clone());
                    hp
                })
            })
            .collect();
    }
    let configs: Vec<TrainConfig> = combos
        .into_iter()
        .filter(|hp| is_feasible(spec.kind, hp))
        .map(|hp| TrainConfig { kind: spec.kind, hyperparameters: hp, seed: 0, classes: None })
        .collect();
    if configs.is_empty() {
        return Err(TuningError::AllInfeasible);
    }
    Ok(configs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub config: TrainConfig,
    pub dev_report: Option<EvalReport>,
    pub error: Option<String>,
    pub train_seconds: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TrialResult {
    pub fn score(&self, metric: Metric) -> Option<f64> {
        self.dev_report.as_ref().map(|r| r.metric(metric))
    }
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub metric: Metric,
    pub base_seed: u64,
    pub workers: usize,
    /// Class list passed to every trial and used for dev evaluation.
    pub classes: Vec<ClassLabel>,
}

#[derive(Clone, Debug)]
pub struct GridSearch {
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
}

/// Index of the highest-scoring successful trial; the lowest index wins ties.
pub fn select_best(trials: &[TrialResult], metric: Metric) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate() {
        if let Some(s) = t.score(metric) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn run_trial(
    index: usize,
    mut config: TrainConfig,
    data: (&FeatureMatrix, &[ClassLabel], &FeatureMatrix, &[ClassLabel]),
    opts: &SearchOptions,
) -> TrialResult {
    let (x_train, y_train, x_dev, y_dev) = data;
    config.seed = opts.base_seed.wrapping_add(index as u64);
    config.classes = Some(opts.classes.clone());
    let start = Instant::now();
    let outcome = train(x_train, y_train, &config).map_err(|e| e.to_string()).and_then(|model| {
        let pred = predict(&model, x_dev).map_err(|e| e.to_string())?;
        let report = evaluate(y_dev, &pred, &opts.classes).map_err(|e| e.to_string())?;
        Ok((report, model.warnings))
    });
    let train_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((report, warnings)) => {
            log::info!("trial {index}: {:?} = {:.4}", opts.metric, report.metric(opts.metric));
            TrialResult { trial_index: index, config, dev_report: Some(report), error: None, train_seconds, warnings }
        }
        Err(e) => {
            log::warn!("trial {index} failed: {e}");
            TrialResult {
                trial_index: index,
                config,
                dev_report: None,
                error: Some(e),
                train_seconds,
                warnings: vec![],
            }
        }
    }
}

/// Trains every grid configuration on the training rows and scores it on dev.
///
/// Trial `i` uses seed `base_seed + i`. Results do not depend on the number
/// of workers.
pub fn run_grid_search(
    spec: &GridSpec,
    x_train: &FeatureMatrix,
    y_train: &[ClassLabel],
    x_dev: &FeatureMatrix,
    y_dev: &[ClassLabel],
    opts: &SearchOptions,
) -> Result<GridSearch, TuningError> {
    if y_dev.is_empty() || x_dev.n_rows() != y_dev.len() {
        return Err(TuningError::Data(format!("dev split has {} rows and {} labels", x_dev.n_rows(), y_dev.len())));
    }
    let configs = enumerate_grid(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| TuningError::Data(e.to_string()))?;
    let data = (x_train, y_train, x_dev, y_dev);
    let trials: Vec<TrialResult> =
        pool.install(|| configs.into_par_iter().enumerate().map(|(i, cfg)| run_trial(i, cfg, data, opts)).collect());
    let Some(best) = select_best(&trials, opts.metric) else {
        let first = trials.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        return Err(TuningError::AllTrialsFailed { n: trials.len(), first });
    };
    Ok(GridSearch { best: trials[best].clone(), trials })
}

/// One JSON object per line.
pub fn write_trials_jsonl<W: Write>(trials: &[TrialResult], mut out: W) -> Result<(), TuningError> {
    for t in trials {
        serde_json::to_writer(&mut out, t).map_err(|e| TuningError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
