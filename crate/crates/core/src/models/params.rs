use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelKind};

/// A single hyperparameter value as it appears in JSON configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    List(Vec<ParamValue>),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    fn same_as(&self, other: &ParamValue) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
            _ => self == other,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<usize> for ParamValue {
    fn from(v: usize) -> Self {
        ParamValue::Int(v as i64)
    }
}

impl From<Vec<usize>> for ParamValue {
    fn from(v: Vec<usize>) -> Self {
        ParamValue::List(v.into_iter().map(ParamValue::from).collect())
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

pub type Hyperparameters = BTreeMap<String, ParamValue>;

/// Keys each model accepts.
pub fn legal_keys(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Logreg => &["C", "max_iter", "penalty", "solver", "tol"],
        ModelKind::Perceptron => &["alpha", "eta0", "max_iter", "n_iter_no_change", "penalty"],
        ModelKind::Mlp => &[
            "activation",
            "alpha",
            "batch_size",
            "early_stopping",
            "hidden_layer_sizes",
            "learning_rate_init",
            "max_iter",
            "n_iter_no_change",
            "tol",
            "validation_fraction",
        ],
        ModelKind::Gnb => &["var_smoothing"],
        ModelKind::Svm => &["C", "coef0", "degree", "gamma", "kernel", "max_iter", "tol"],
        ModelKind::RandomForest => &["bootstrap", "max_depth", "max_features", "min_samples_split", "n_estimators"],
        ModelKind::Adaboost => &["learning_rate", "n_estimators"],
        ModelKind::Gbt => &["lambda", "learning_rate", "max_depth", "min_child_weight", "n_estimators"],
    }
}

fn floats(v: &[f64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Float(x)).collect()
}

fn ints(v: &[i64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Int(x)).collect()
}

fn texts(v: &[&str]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::from(x)).collect()
}

/// `np.logspace(0, -9, num=100)`.
pub fn var_smoothing_grid() -> Vec<f64> {
    (0..100).map(|i| 10f64.powf(-9.0 * i as f64 / 99.0)).collect()
}

/// The published grid-search value lists, one axis per tuned parameter.
pub fn published_grid(kind: ModelKind) -> BTreeMap<String, Vec<ParamValue>> {
    let mut g = BTreeMap::new();
    let mut put = |k: &str, v: Vec<ParamValue>| {
        g.insert(k.to_string(), v);
    };
    match kind {
        ModelKind::Logreg => {
            put("penalty", texts(&["l1", "l2"]));
            put("C", floats(&[0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]));
            put("solver", texts(&["lbfgs", "liblinear"]));
            put("max_iter", ints(&[100]));
        }
        ModelKind::Adaboost => {}
        ModelKind::Mlp => {
            put("activation", texts(&["relu", "logistic", "tanh"]));
            put("early_stopping", vec![ParamValue::Bool(true)]);
            put("learning_rate_init", floats(&[0.0001, 0.001, 0.01]));
            put("max_iter", ints(&[1000, 5000]));
            put("hidden_layer_sizes", vec![ParamValue::List(ints(&[150, 150]))]);
        }
        ModelKind::Perceptron => {
            put("penalty", vec![ParamValue::from("l2"), ParamValue::from("l1"), ParamValue::Null]);
            put("alpha", floats(&[0.0001, 0.001, 0.01, 0.1, 1.0]));
            put("eta0", floats(&[0.0001, 0.001, 0.01, 0.1, 1.0]));
            put("max_iter", ints(&[100, 1000, 10000]));
        }
        ModelKind::Gnb => put("var_smoothing", floats(&var_smoothing_grid())),
        ModelKind::RandomForest => {
            put("n_estimators", ints(&[100, 125, 150]));
            put("max_depth", ints(&[5, 10, 15, 20]));
            put("min_samples_split", ints(&[2, 5, 10]));
            put("bootstrap", vec![ParamValue::Bool(true)]);
        }
        ModelKind::Svm => {
            put("C", floats(&[1.0, 0.5]));
            put("kernel", texts(&["linear", "poly", "rbf", "sigmoid"]));
        }
        ModelKind::Gbt => {
            put("max_depth", ints(&[1, 2]));
            put("n_estimators", ints(&[100, 200, 300]));
        }
    }
    g
}

/// Warnings for values outside the published grid. Off-grid values are allowed.
pub fn off_grid_warnings(kind: ModelKind, hp: &Hyperparameters) -> Vec<String> {
    let grid = published_grid(kind);
    hp.iter()
        .filter_map(|(k, v)| {
            let axis = grid.get(k)?;
            (!axis.iter().any(|g| g.same_as(v))).then(|| format!("{kind}: {k}={v} is outside the tuning grid"))
        })
        .collect()
}

/// Typed accessor over a hyperparameter map.
pub(crate) struct Params<'a> {
    kind: ModelKind,
    map: &'a Hyperparameters,
}

impl<'a> Params<'a> {
    pub fn new(kind: ModelKind, map: &'a Hyperparameters) -> Result<Self, ModelError> {
        let legal = legal_keys(kind);
        if let Some(bad) = map.keys().find(|k| !legal.contains(&k.as_str())) {
            return Err(ModelError::InvalidParam(format!("{kind} does not accept '{bad}'")));
        }
        Ok(Params { kind, map })
    }

    pub fn raw(&self, key: &str) -> Option<&ParamValue> {
        self.map.get(key)
    }

    pub fn invalid(&self, key: &str, want: &str) -> ModelError {
        ModelError::InvalidParam(format!("{}: '{key}' must be {want}, got {}", self.kind, self.map[key]))
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| self.invalid(key, "a number")),
        }
    }

    pub fn positive_f64(&self, key: &str, default: f64) -> Result<f64, ModelError> {
        let v = self.f64(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.invalid(key, "positive"))
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(ParamValue::Float(f)) if *f >= 0.0 && f.fract() == 0.0 => Ok(*f as usize),
            Some(_) => Err(self.invalid(key, "a non-negative integer")),
        }
    }

    pub fn opt_usize(&self, key: &str, default: Option<usize>) -> Result<Option<usize>, ModelError> {
        match self.map.get(key) {
            Some(ParamValue::Null) => Ok(None),
            None => Ok(default),
            Some(_) => self.usize(key, 0).map(Some),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, ModelError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(ParamValue::Bool(b)) => Ok(*b),
            Some(_) => Err(self.invalid(key, "a boolean")),
        }
    }

    /// String value; JSON `null` maps to `"none"`.
    pub fn choice(&self, key: &str, default: &str, allowed: &[&str]) -> Result<String, ModelError> {
        let v = match self.map.get(key) {
            None => default.to_string(),
            Some(ParamValue::Null) => "none".to_string(),
            Some(ParamValue::Text(s)) => s.to_lowercase(),
            Some(_) => return Err(self.invalid(key, &format!("one of {allowed:?}"))),
        };
        if allowed.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(self.invalid(key, &format!("one of {allowed:?}")))
        }
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, ModelError> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::List(items)) => items
                .iter()
                .map(|v| match v {
                    ParamValue::Int(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(self.invalid(key, "a list of positive integers")),
                })
                .collect(),
            Some(ParamValue::Int(i)) if *i > 0 => Ok(vec![*i as usize]),
            Some(_) => Err(self.invalid(key, "a list of positive integers")),
        }
    }
}
