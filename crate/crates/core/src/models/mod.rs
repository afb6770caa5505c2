//! Classical classifiers behind a uniform train / predict contract.
//!
//! Every learner consumes a [`FeatureMatrix`] plus gold labels and produces a
//! [`TrainedModel`]. Class order is canonical ([`ClassLabel`] order, or the
//! explicit `classes` list of the [`TrainConfig`]), predictions are the argmax
//! of [`predict_proba`] with ties going to the lowest class index, and models
//! persist as versioned JSON.

mod adaboost;
mod forest;
mod gbt;
mod gnb;
mod logreg;
mod mlp;
mod params;
mod perceptron;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;
use crate::features::{FeatureMatrix, RowView};

pub use adaboost::AdaBoostParams;
pub use forest::ForestParams;
pub use gbt::{GbtParams, RegNode, RegTree};
pub use gnb::GnbParams;
pub use logreg::{logreg_objective, LogRegParams};
pub use mlp::{Activation, Layer, MlpParams};
pub use params::{legal_keys, off_grid_warnings, published_grid, var_smoothing_grid, Hyperparameters, ParamValue};
pub use perceptron::PerceptronParams;
pub use svm::{smo_solve, BinaryMachine, Kernel, KernelKind, SmoSolution, SvmParams};
pub use tree::{Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logreg,
    Perceptron,
    Mlp,
    Gnb,
    Svm,
    RandomForest,
    Adaboost,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Logreg,
        ModelKind::Perceptron,
        ModelKind::Mlp,
        ModelKind::Gnb,
        ModelKind::Svm,
        ModelKind::RandomForest,
        ModelKind::Adaboost,
        ModelKind::Gbt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Perceptron => "perceptron",
            ModelKind::Mlp => "mlp",
            ModelKind::Gnb => "gnb",
            ModelKind::Svm => "svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Adaboost => "adaboost",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown model kind '{s}'"))
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error("invalid combination: {0}")]
    InvalidCombination(String),
    #[error("training data: {0}")]
    Data(String),
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
    /// Class order for the model. Defaults to the labels present in `y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<ClassLabel>>,
}

impl TrainConfig {
    pub fn new(kind: ModelKind) -> Self {
        TrainConfig { kind, hyperparameters: Hyperparameters::new(), seed: 0, classes: None }
    }

    pub fn with(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.hyperparameters.insert(key.to_string(), value.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_classes(mut self, classes: Vec<ClassLabel>) -> Self {
        self.classes = Some(classes);
        self
    }

    /// Checks keys and returns off-grid warnings.
    pub fn validate(&self) -> Result<Vec<String>, ModelError> {
        params::Params::new(self.kind, &self.hyperparameters)?;
        Ok(off_grid_warnings(self.kind, &self.hyperparameters))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelParams {
    Logreg(LogRegParams),
    Perceptron(PerceptronParams),
    Mlp(MlpParams),
    Gnb(GnbParams),
    Svm(SvmParams),
    RandomForest(ForestParams),
    Adaboost(AdaBoostParams),
    Gbt(GbtParams),
}

impl ModelParams {
    fn proba_into(&self, x: RowView<'_>, out: &mut [f64]) {
        match self {
            ModelParams::Logreg(p) => p.proba_into(x, out),
            ModelParams::Perceptron(p) => p.proba_into(x, out),
            ModelParams::Mlp(p) => p.proba_into(x, out),
            ModelParams::Gnb(p) => p.proba_into(x, out),
            ModelParams::Svm(p) => p.proba_into(x, out),
            ModelParams::RandomForest(p) => p.proba_into(x, out),
            ModelParams::Adaboost(p) => p.proba_into(x, out),
            ModelParams::Gbt(p) => p.proba_into(x, out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub classes: Vec<ClassLabel>,
    pub feature_dim: usize,
    pub parameters: ModelParams,
    /// Off-grid values, non-convergence and similar notes from training.
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format_version: u32,
    kind: ModelKind,
    classes: &'a [ClassLabel],
    feature_dim: usize,
    parameters: &'a ModelParams,
    warnings: &'a [String],
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format_version: u32,
    kind: ModelKind,
    classes: Vec<ClassLabel>,
    feature_dim: usize,
    parameters: serde_json::Value,
    #[serde(default)]
    warnings: Vec<String>,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&EnvelopeOut {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            classes: &self.classes,
            feature_dim: self.feature_dim,
            parameters: &self.parameters,
            warnings: &self.warnings,
        })
        .expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let env: EnvelopeIn = serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        if env.format_version > FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "format_version {} is newer than supported {FORMAT_VERSION}",
                env.format_version
            )));
        }
        let p = env.parameters;
        let err = |e: serde_json::Error| ModelError::Format(e.to_string());
        let parameters = match env.kind {
            ModelKind::Logreg => ModelParams::Logreg(serde_json::from_value(p).map_err(err)?),
            ModelKind::Perceptron => ModelParams::Perceptron(serde_json::from_value(p).map_err(err)?),
            ModelKind::Mlp => ModelParams::Mlp(serde_json::from_value(p).map_err(err)?),
            ModelKind::Gnb => ModelParams::Gnb(serde_json::from_value(p).map_err(err)?),
            ModelKind::Svm => ModelParams::Svm(serde_json::from_value(p).map_err(err)?),
            ModelKind::RandomForest => ModelParams::RandomForest(serde_json::from_value(p).map_err(err)?),
            ModelKind::Adaboost => ModelParams::Adaboost(serde_json::from_value(p).map_err(err)?),
            ModelKind::Gbt => ModelParams::Gbt(serde_json::from_value(p).map_err(err)?),
        };
        if env.classes.is_empty() || env.feature_dim == 0 {
            return Err(ModelError::Format("model has no classes or zero feature_dim".into()));
        }
        Ok(TrainedModel {
            kind: env.kind,
            classes: env.classes,
            feature_dim: env.feature_dim,
            parameters,
            warnings: env.warnings,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_dim(&self, x: &FeatureMatrix) -> Result<(), ModelError> {
        if x.n_cols() != self.feature_dim {
            return Err(ModelError::DimensionMismatch { expected: self.feature_dim, found: x.n_cols() });
        }
        Ok(())
    }

    /// Probability vector for one row.
    pub fn proba_row(&self, x: RowView<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.classes.len()];
        self.parameters.proba_into(x, &mut out);
        out
    }
}

/// Trains the learner selected by `cfg.kind`.
pub fn train(x: &FeatureMatrix, y: &[ClassLabel], cfg: &TrainConfig) -> Result<TrainedModel, ModelError> {
    let mut warnings = cfg.validate()?;
    let data = TrainingData::new(x, y, cfg.classes.as_deref())?;
    let hp = params::Params::new(cfg.kind, &cfg.hyperparameters)?;
    let parameters = match cfg.kind {
        ModelKind::Logreg => ModelParams::Logreg(logreg::train(&data, &hp, &mut warnings)?),
        ModelKind::Perceptron => ModelParams::Perceptron(perceptron::train(&data, &hp, cfg.seed, &mut warnings)?),
        ModelKind::Mlp => ModelParams::Mlp(mlp::train(&data, &hp, cfg.seed, &mut warnings)?),
        ModelKind::Gnb => ModelParams::Gnb(gnb::train(&data, &hp)?),
        ModelKind::Svm => ModelParams::Svm(svm::train(&data, &hp, &mut warnings)?),
        ModelKind::RandomForest => ModelParams::RandomForest(forest::train(&data, &hp, cfg.seed)?),
        ModelKind::Adaboost => ModelParams::Adaboost(adaboost::train(&data, &hp)?),
        ModelKind::Gbt => ModelParams::Gbt(gbt::train(&data, &hp)?),
    };
    Ok(TrainedModel { kind: cfg.kind, classes: data.classes, feature_dim: x.n_cols(), parameters, warnings })
}

macro_rules! kind_trainer {
    ($($name:ident => $kind:ident),* $(,)?) => {
        $(
            #[doc = concat!("[`train`] with the kind forced to `", stringify!($kind), "`.")]
            pub fn $name(x: &FeatureMatrix, y: &[ClassLabel], cfg: &TrainConfig) -> Result<TrainedModel, ModelError> {
                train(x, y, &TrainConfig { kind: ModelKind::$kind, ..cfg.clone() })
            }
        )*
    };
}

kind_trainer! {
    train_logreg => Logreg,
    train_perceptron => Perceptron,
    train_mlp => Mlp,
    train_gnb => Gnb,
    train_svm => Svm,
    train_random_forest => RandomForest,
    train_adaboost => Adaboost,
    train_gbt => Gbt,
}

/// `n x K` class probabilities, columns in `model.classes` order.
pub fn predict_proba(model: &TrainedModel, x: &FeatureMatrix) -> Result<FeatureMatrix, ModelError> {
    model.check_dim(x)?;
    let k = model.classes.len();
    let mut data = vec![0.0; x.n_rows() * k];
    for (row, out) in x.rows().zip(data.chunks_mut(k)) {
        model.parameters.proba_into(row, out);
    }
    FeatureMatrix::dense(x.n_rows(), k, data)
        .and_then(|m| m.with_row_ids(x.row_ids().to_vec()))
        .map_err(|e| ModelError::Data(e.to_string()))
}

pub fn predict(model: &TrainedModel, x: &FeatureMatrix) -> Result<Vec<ClassLabel>, ModelError> {
    model.check_dim(x)?;
    let k = model.classes.len();
    let mut buf = vec![0.0; k];
    Ok(x.rows()
        .map(|row| {
            model.parameters.proba_into(row, &mut buf);
            model.classes[argmax(&buf)]
        })
        .collect())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Binary scorers expose one decision value `s`; the probability of the
/// positive (second) class is `sigmoid(s)`.
pub(crate) fn binary_scores_into(s: f64, out: &mut [f64]) {
    out[0] = 0.0;
    out[1] = s;
    softmax_in_place(out);
}

/// Validated training inputs with labels encoded as class indices.
pub(crate) struct TrainingData<'a> {
    pub x: &'a FeatureMatrix,
    pub y: Vec<usize>,
    pub classes: Vec<ClassLabel>,
}

impl<'a> TrainingData<'a> {
    fn new(x: &'a FeatureMatrix, y: &[ClassLabel], classes: Option<&[ClassLabel]>) -> Result<Self, ModelError> {
        if y.is_empty() {
            return Err(ModelError::Data("no training rows".into()));
        }
        if x.n_rows() != y.len() {
            return Err(ModelError::Data(format!("{} rows but {} labels", x.n_rows(), y.len())));
        }
        let classes = match classes {
            Some(c) => {
                let mut c = c.to_vec();
                c.dedup();
                if c.is_empty() {
                    return Err(ModelError::Data("empty class list".into()));
                }
                c
            }
            None => {
                let mut c = y.to_vec();
                c.sort();
                c.dedup();
                c
            }
        };
        let y = y
            .iter()
            .map(|l| {
                classes
                    .iter()
                    .position(|c| c == l)
                    .ok_or_else(|| ModelError::Data(format!("label {l} not in class list")))
            })
            .collect::<Result<_, _>>()?;
        Ok(TrainingData { x, y, classes })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.n_cols()
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        self.y.iter().for_each(|&i| c[i] += 1);
        c
    }

    pub fn require_two_labels(&self, what: &str) -> Result<(), ModelError> {
        if self.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
            return Err(ModelError::Data(format!("{what} needs at least two distinct labels")));
        }
        Ok(())
    }

    pub fn require_all_classes(&self, what: &str) -> Result<(), ModelError> {
        if let Some(i) = self.class_counts().iter().position(|&c| c == 0) {
            return Err(ModelError::Data(format!("{what}: class {} has no training rows", self.classes[i])));
        }
        self.require_two_labels(what)
    }
}
