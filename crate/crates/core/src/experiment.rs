//! End-to-end experiment: load splits, featurize, optionally augment, grid
//! search on dev, evaluate the winner once on test and persist artifacts.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{balance_classes, AugmentConfig, AugmentError};
use crate::corpus::{load_corpus, ClassLabel, CorpusError, CorpusFormat, Document, LabeledCorpus, Split, TaskMode};
use crate::features::{
    embed_texts, load_embedding_table, load_embedding_table_filtered, load_precomputed_vectors, parse_vector_rows,
    pca_fit, pca_transform, tfidf_fit, tfidf_transform_tokens, EmbeddingTable, FeatureError, FeatureMatrix, PcaModel,
    PcaTarget, Vocabulary,
};
use crate::metrics::{evaluate, format_report, EvalReport, Metric, MetricsError};
use crate::models::{predict, predict_proba, train, ModelError, ModelKind, ParamValue, TrainedModel};
use crate::textproc::Normalizer;
use crate::tuning::{run_grid_search, write_trials_jsonl, GridSpec, SearchOptions, TrialResult, TuningError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerKind {
    Tfidf,
    Glove,
    Fasttext,
    W2v,
    Better,
    Faster,
}

impl FeaturizerKind {
    pub const ALL: [FeaturizerKind; 6] = [
        FeaturizerKind::Tfidf,
        FeaturizerKind::Glove,
        FeaturizerKind::Fasttext,
        FeaturizerKind::W2v,
        FeaturizerKind::Better,
        FeaturizerKind::Faster,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeaturizerKind::Tfidf => "tfidf",
            FeaturizerKind::Glove => "glove",
            FeaturizerKind::Fasttext => "fasttext",
            FeaturizerKind::W2v => "w2v",
            FeaturizerKind::Better => "better",
            FeaturizerKind::Faster => "faster",
        }
    }

    /// Sentence vectors come from an external export rather than from text.
    pub fn is_precomputed(&self) -> bool {
        matches!(self, FeaturizerKind::Better | FeaturizerKind::Faster)
    }

    pub fn uses_word_vectors(&self) -> bool {
        matches!(self, FeaturizerKind::Glove | FeaturizerKind::Fasttext | FeaturizerKind::W2v)
    }
}

impl fmt::Display for FeaturizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeaturizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeaturizerKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown featurizer '{s}'"))
    }
}

/// `"off"`, `{"fraction": 0.95}` or `{"k": 50}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSetting {
    #[default]
    Off,
    Fraction(f64),
    K(usize),
}

impl PcaSetting {
    /// The setting used for the "pca" experiment suffix when none is given.
    pub const DEFAULT_ON: PcaSetting = PcaSetting::Fraction(0.95);

    fn target(&self) -> Option<PcaTarget> {
        match *self {
            PcaSetting::Off => None,
            PcaSetting::Fraction(f) => Some(PcaTarget::Fraction(f)),
            PcaSetting::K(k) => Some(PcaTarget::K(k)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

impl SplitPaths {
    pub fn get(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.train, &mut self.dev, &mut self.test] {
            *p = resolve(base, p);
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task_mode: TaskMode,
    pub data: SplitPaths,
    #[serde(default)]
    pub format: CorpusFormat,
    pub featurizer: FeaturizerKind,
    /// Word-vector text file for glove, fasttext and w2v.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    /// Precomputed sentence vectors per split for better and faster.
    #[serde(default)]
    pub vectors: Option<SplitPaths>,
    #[serde(default)]
    pub pca: PcaSetting,
    pub model: ModelKind,
    /// Search space; the published grid for `model` when absent.
    #[serde(default)]
    pub grid: Option<std::collections::BTreeMap<String, Vec<ParamValue>>>,
    #[serde(default)]
    pub augmentation: Option<AugmentConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Grid-search worker threads; all available cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Selection metric; weighted F1 for three_way and macro F1 for two_way when absent.
    #[serde(default)]
    pub metric: Option<Metric>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths are taken relative to the file.
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text =
            fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.resolve(base);
        if let Some(v) = cfg.vectors.as_mut() {
            v.resolve(base);
        }
        cfg.embeddings = cfg.embeddings.map(|p| resolve(base, &p));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        Ok(cfg)
    }

    /// `<featurizer>-<pca|no-pca>`.
    pub fn name(&self) -> String {
        let suffix = if self.pca == PcaSetting::Off { "no-pca" } else { "pca" };
        format!("{}-{suffix}", self.featurizer)
    }

    pub fn selection_metric(&self) -> Metric {
        self.metric.unwrap_or(match self.task_mode {
            TaskMode::ThreeWay => Metric::WeightedF1,
            TaskMode::TwoWay => Metric::MacroF1,
        })
    }

    /// Where artifacts for this run are written.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.name()).join(self.model.as_str())
    }

    pub fn grid_spec(&self) -> GridSpec {
        match &self.grid {
            Some(axes) => GridSpec { kind: self.model, axes: axes.clone() },
            None => GridSpec::published(self.model),
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.featurizer.uses_word_vectors() && self.embeddings.is_none() {
            return Err(ExperimentError::Config(format!("featurizer {} needs an `embeddings` file", self.featurizer)));
        }
        if self.featurizer.is_precomputed() {
            if self.vectors.is_none() {
                return Err(ExperimentError::Config(format!(
                    "featurizer {} needs `vectors` for each split",
                    self.featurizer
                )));
            }
            if self.augmentation.is_some() {
                return Err(ExperimentError::Config(format!(
                    "augmentation needs text featurization; {} vectors cannot cover new copies",
                    self.featurizer
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corpus ({split}): {source}")]
    Corpus { split: Split, source: CorpusError },
    #[error("features ({stage}): {source}")]
    Features { stage: &'static str, source: FeatureError },
    #[error("augment: {0}")]
    Augment(#[from] AugmentError),
    #[error("tuning: {0}")]
    Tuning(#[from] TuningError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}

fn feat(stage: &'static str) -> impl Fn(FeatureError) -> ExperimentError {
    move |source| ExperimentError::Features { stage, source }
}

/// Fitted text-to-features transform, persisted beside the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub kind: FeaturizerKind,
    pub normalizer: Normalizer,
    #[serde(default)]
    pub vocabulary: Option<Vocabulary>,
    /// Word-vector file; the table itself is not copied.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub embedding_dim: Option<usize>,
    #[serde(default)]
    pub pca: Option<PcaModel>,
}

impl Featurizer {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("featurizer serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(s).map_err(|e| ExperimentError::Config(format!("featurizer file: {e}")))
    }

    /// Loads the word-vector table referenced by this featurizer, if any.
    pub fn load_table(&self, keep: Option<&HashSet<String>>) -> Result<Option<EmbeddingTable>, ExperimentError> {
        match (&self.embeddings, self.kind.uses_word_vectors()) {
            (Some(p), true) => Ok(Some(
                match keep {
                    Some(k) => load_embedding_table_filtered(p, self.embedding_dim, Some(k)),
                    None => load_embedding_table(p, self.embedding_dim),
                }
                .map_err(feat("embeddings"))?,
            )),
            (None, true) => Err(ExperimentError::Config(format!("featurizer {} has no embeddings path", self.kind))),
            _ => Ok(None),
        }
    }

    /// Features before PCA for raw texts. Not available for precomputed vectors.
    fn raw_text_features<'a>(
        &self,
        texts: impl IntoIterator<Item = &'a str>,
        table: Option<&EmbeddingTable>,
    ) -> Result<FeatureMatrix, ExperimentError> {
        match self.kind {
            FeaturizerKind::Tfidf => {
                let vocab =
                    self.vocabulary.as_ref().ok_or_else(|| ExperimentError::Config("missing vocabulary".into()))?;
                let docs: Vec<_> = texts.into_iter().map(|t| self.normalizer.tokenize(t)).collect();
                tfidf_transform_tokens(vocab, &docs).map_err(feat("tfidf"))
            }
            k if k.uses_word_vectors() => {
                let table = table.ok_or_else(|| ExperimentError::Config("word-vector table not loaded".into()))?;
                embed_texts(table, texts, &self.normalizer).map_err(feat("pooling"))
            }
            k => Err(ExperimentError::Config(format!("featurizer {k} reads precomputed vectors, not text"))),
        }
    }

    /// Applies the fitted PCA, if any.
    pub fn project(&self, x: FeatureMatrix) -> Result<FeatureMatrix, ExperimentError> {
        match &self.pca {
            Some(p) => {
                let ids = x.row_ids().to_vec();
                pca_transform(p, &x).and_then(|m| m.with_row_ids(ids)).map_err(feat("pca"))
            }
            None => Ok(x),
        }
    }

    pub fn transform_texts<'a>(
        &self,
        texts: impl IntoIterator<Item = &'a str>,
        table: Option<&EmbeddingTable>,
    ) -> Result<FeatureMatrix, ExperimentError> {
        self.project(self.raw_text_features(texts, table)?)
    }
}

/// Fit-time stages reported to a [`FitObserver`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FeaturizerFit,
    PcaFit,
    Augment,
    ModelFit,
    Evaluate,
}

/// Receives the documents that each stage consumes.
pub trait FitObserver {
    fn observe(&mut self, stage: Stage, split: Split, docs: &[Document]);
}

impl FitObserver for () {
    fn observe(&mut self, _: Stage, _: Split, _: &[Document]) {}
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub name: String,
    pub run_dir: PathBuf,
    pub feature_dim: usize,
    pub best: TrialResult,
    pub trials: Vec<TrialResult>,
    pub model: TrainedModel,
    pub featurizer: Featurizer,
    pub test_report: EvalReport,
}

/// Machine-readable test summary; contains nothing that varies between identical runs.
#[derive(Serialize)]
struct TestReportFile<'a> {
    experiment: &'a str,
    model: ModelKind,
    task_mode: TaskMode,
    selection_metric: Metric,
    feature_dim: usize,
    train_rows: usize,
    best_trial: usize,
    best_config: &'a crate::models::TrainConfig,
    dev_score: f64,
    report: &'a EvalReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    run_experiment_observed(cfg, &mut ())
}

pub fn run_experiment_observed(
    cfg: &ExperimentConfig,
    observer: &mut dyn FitObserver,
) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let load = |split| {
        load_corpus(cfg.data.get(split), split, cfg.task_mode, &cfg.format)
            .map_err(|source| ExperimentError::Corpus { split, source })
    };
    let (train_c, dev_c, test_c) = (load(Split::Train)?, load(Split::Dev)?, load(Split::Test)?);
    log::info!("loaded {} / {} / {} documents", train_c.len(), dev_c.len(), test_c.len());

    let normalizer = Normalizer::default();
    let mut featurizer = Featurizer {
        kind: cfg.featurizer,
        normalizer: normalizer.clone(),
        vocabulary: None,
        embeddings: cfg.embeddings.clone(),
        embedding_dim: cfg.embedding_dim,
        pca: None,
    };

    let augmented = match &cfg.augmentation {
        Some(aug) => {
            observer.observe(Stage::Augment, Split::Train, &train_c.documents);
            let balanced = balance_classes(&train_c, aug)?;
            log::info!("augmentation added {} documents", balanced.len() - train_c.len());
            balanced.documents[train_c.len()..].to_vec()
        }
        None => Vec::new(),
    };

    observer.observe(Stage::FeaturizerFit, Split::Train, &train_c.documents);
    let (x_train, x_aug, x_dev, x_test) = if cfg.featurizer.is_precomputed() {
        let paths = cfg.vectors.as_ref().expect("validated");
        let read = |c: &LabeledCorpus, split| load_precomputed_vectors(paths.get(split), c).map_err(feat("vectors"));
        (read(&train_c, Split::Train)?, None, read(&dev_c, Split::Dev)?, read(&test_c, Split::Test)?)
    } else {
        let table = if cfg.featurizer.uses_word_vectors() {
            let keep: HashSet<String> = [&train_c, &dev_c, &test_c]
                .iter()
                .flat_map(|c| c.texts().flat_map(|t| normalizer.tokenize(t).0))
                .chain(augmented.iter().flat_map(|d| normalizer.tokenize(&d.text).0))
                .collect();
            featurizer.load_table(Some(&keep))?
        } else {
            featurizer.vocabulary = Some(tfidf_fit(&train_c, &normalizer).map_err(feat("tfidf"))?);
            None
        };
        let t = table.as_ref();
        let with_ids = |m: FeatureMatrix, docs: &[Document]| {
            m.with_row_ids(docs.iter().map(|d| d.id).collect()).map_err(feat("ids"))
        };
        let x_train = with_ids(featurizer.raw_text_features(train_c.texts(), t)?, &train_c.documents)?;
        let x_aug = if augmented.is_empty() {
            None
        } else {
            Some(with_ids(featurizer.raw_text_features(augmented.iter().map(|d| d.text.as_str()), t)?, &augmented)?)
        };
        let x_dev = with_ids(featurizer.raw_text_features(dev_c.texts(), t)?, &dev_c.documents)?;
        let x_test = with_ids(featurizer.raw_text_features(test_c.texts(), t)?, &test_c.documents)?;
        (x_train, x_aug, x_dev, x_test)
    };

    if let Some(target) = cfg.pca.target() {
        observer.observe(Stage::PcaFit, Split::Train, &train_c.documents);
        featurizer.pca = Some(pca_fit(&x_train, target).map_err(feat("pca"))?);
    }
    let x_train = featurizer.project(x_train)?;
    let x_dev = featurizer.project(x_dev)?;
    let x_test = featurizer.project(x_test)?;
    let mut train_docs = train_c.documents.clone();
    let x_fit = match x_aug {
        Some(a) => {
            train_docs.extend(augmented.iter().cloned());
            x_train.vstack(&featurizer.project(a)?).map_err(feat("augment"))?
        }
        None => x_train,
    };
    let y_fit: Vec<ClassLabel> = train_docs.iter().map(|d| d.label).collect();
    log::info!("{}: {} training rows x {} features", cfg.name(), x_fit.n_rows(), x_fit.n_cols());

    let classes = cfg.task_mode.classes();
    let metric = cfg.selection_metric();
    let opts = SearchOptions {
        metric,
        base_seed: cfg.seed,
        workers: cfg.workers.unwrap_or_else(rayon::current_num_threads),
        classes: classes.clone(),
    };
    observer.observe(Stage::ModelFit, Split::Train, &train_docs);
    observer.observe(Stage::Evaluate, Split::Dev, &dev_c.documents);
    let search = run_grid_search(&cfg.grid_spec(), &x_fit, &y_fit, &x_dev, &dev_c.labels(), &opts)?;
    log::info!(
        "best trial {} with dev {:?} = {:.4}",
        search.best.trial_index,
        metric,
        search.best.score(metric).unwrap_or(0.0)
    );

    observer.observe(Stage::ModelFit, Split::Train, &train_docs);
    let model = train(&x_fit, &y_fit, &search.best.config)?;
    observer.observe(Stage::Evaluate, Split::Test, &test_c.documents);
    let pred = predict(&model, &x_test)?;
    let test_report = evaluate(&test_c.labels(), &pred, &classes)?;

    let outcome = ExperimentOutcome {
        name: cfg.name(),
        run_dir: cfg.run_dir(),
        feature_dim: x_fit.n_cols(),
        best: search.best,
        trials: search.trials,
        model,
        featurizer,
        test_report,
    };
    write_artifacts(cfg, &outcome, x_fit.n_rows())?;
    Ok(outcome)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

fn write_artifacts(cfg: &ExperimentConfig, out: &ExperimentOutcome, train_rows: usize) -> Result<(), ExperimentError> {
    let dir = &out.run_dir;
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.clone(), source })?;
    write_file(&dir.join("model.json"), &out.model.to_json())?;
    write_file(&dir.join("featurizer.json"), &out.featurizer.to_json())?;
    let trials_path = dir.join("trials.jsonl");
    let f = File::create(&trials_path).map_err(|source| ExperimentError::Io { path: trials_path.clone(), source })?;
    let mut w = BufWriter::new(f);
    write_trials_jsonl(&out.trials, &mut w)?;
    w.flush().map_err(|source| ExperimentError::Io { path: trials_path, source })?;
    write_file(&dir.join("best.json"), &serde_json::to_string_pretty(&out.best).expect("trial serializes"))?;
    let metric = cfg.selection_metric();
    let summary = TestReportFile {
        experiment: &out.name,
        model: cfg.model,
        task_mode: cfg.task_mode,
        selection_metric: metric,
        feature_dim: out.feature_dim,
        train_rows,
        best_trial: out.best.trial_index,
        best_config: &out.best.config,
        dev_score: out.best.score(metric).unwrap_or(0.0),
        report: &out.test_report,
    };
    write_file(&dir.join("test_report.json"), &serde_json::to_string_pretty(&summary).expect("report serializes"))?;
    let text = format!("{} / {} (test)\n{}", out.name, cfg.model, format_report(&out.test_report));
    write_file(&dir.join("test_report.txt"), &text)
}

/// A trained model with its featurizer, ready to label new text.
pub struct Predictor {
    pub model: TrainedModel,
    pub featurizer: Featurizer,
    table: Option<EmbeddingTable>,
}

impl Predictor {
    pub fn new(model: TrainedModel, featurizer: Featurizer) -> Result<Self, ExperimentError> {
        let table = featurizer.load_table(None)?;
        let p = Predictor { model, featurizer, table };
        let dim = p.output_dim();
        if dim.is_some_and(|d| d != p.model.feature_dim) {
            return Err(ExperimentError::Config(format!(
                "featurizer produces {} features but the model expects {}",
                dim.unwrap_or(0),
                p.model.feature_dim
            )));
        }
        Ok(p)
    }

    /// Reads `model.json` and `featurizer.json`.
    pub fn load(model_path: &Path, featurizer_path: &Path) -> Result<Self, ExperimentError> {
        let read =
            |p: &Path| fs::read_to_string(p).map_err(|source| ExperimentError::Io { path: p.to_path_buf(), source });
        let model = TrainedModel::from_json(&read(model_path)?)?;
        let featurizer = Featurizer::from_json(&read(featurizer_path)?)?;
        Self::new(model, featurizer)
    }

    fn output_dim(&self) -> Option<usize> {
        if let Some(p) = &self.featurizer.pca {
            return Some(p.n_components());
        }
        match self.featurizer.kind {
            FeaturizerKind::Tfidf => self.featurizer.vocabulary.as_ref().map(|v| v.len().max(1)),
            _ => self.table.as_ref().map(|t| t.dim()),
        }
    }

    pub fn needs_vectors(&self) -> bool {
        self.featurizer.kind.is_precomputed()
    }

    /// Labels and class probabilities for raw texts.
    pub fn predict_texts(&self, texts: &[String]) -> Result<(Vec<ClassLabel>, Vec<Vec<f64>>), ExperimentError> {
        let x = self.featurizer.transform_texts(texts.iter().map(String::as_str), self.table.as_ref())?;
        self.predict_features(&x)
    }

    /// Labels and class probabilities for sentence vectors in the export format.
    pub fn predict_vector_file<R: BufRead>(
        &self,
        reader: R,
        expected: Option<usize>,
    ) -> Result<(Vec<ClassLabel>, Vec<Vec<f64>>), ExperimentError> {
        let x = parse_vector_rows(reader, expected).map_err(feat("vectors"))?;
        let x = self.featurizer.project(x)?;
        self.predict_features(&x)
    }

    pub fn predict_vector_path(
        &self,
        path: &Path,
        expected: Option<usize>,
    ) -> Result<(Vec<ClassLabel>, Vec<Vec<f64>>), ExperimentError> {
        let f = File::open(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        self.predict_vector_file(BufReader::new(f), expected)
    }

    fn predict_features(&self, x: &FeatureMatrix) -> Result<(Vec<ClassLabel>, Vec<Vec<f64>>), ExperimentError> {
        if x.n_rows() == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let labels = predict(&self.model, x)?;
        let proba = predict_proba(&self.model, x)?.dense_rows();
        Ok((labels, proba))
    }
}
