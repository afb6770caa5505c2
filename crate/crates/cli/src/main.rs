//! `hopeml` command-line front end.

mod serve;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hopeml::augment::{balance_classes, AugmentConfig, AugmentOp};
use hopeml::corpus::{class_counts, load_corpus, write_corpus, CorpusFormat};
use hopeml::experiment::{run_experiment, ExperimentConfig, Predictor};
use hopeml::{ClassLabel, Split, TaskMode};

#[derive(Parser)]
#[command(name = "hopeml", version, about = "Hope-speech classification with classical learners")]
struct Cli {
    /// Experiment config (JSON). Required by `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config or the subcommand default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for `run`, a TSV file for `augment`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-class document counts as JSON.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "three_way")]
        task: TaskMode,
    },
    /// Write a class-balanced copy of a training TSV.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "three_way")]
        task: TaskMode,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// `<class>=<count>`; repeatable. Defaults to the majority count.
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<(ClassLabel, usize)>,
        /// Enabled operators; all three when omitted.
        #[arg(long = "op")]
        ops: Vec<AugmentOp>,
    },
    /// Run the experiment described by `--config`.
    Run {
        /// Grid-search worker threads.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Label text lines from a file or standard input.
    Predict {
        /// Trained `model.json`.
        #[arg(long)]
        model: PathBuf,
        /// Defaults to `featurizer.json` next to the model.
        #[arg(long)]
        featurizer: Option<PathBuf>,
        /// Text file, one document per line. Standard input when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Precomputed sentence vectors, for models trained on them.
        #[arg(long, conflicts_with = "input")]
        vectors: Option<PathBuf>,
        /// Append the class probability vector to each label.
        #[arg(long)]
        proba: bool,
    },
    /// Serve batch predictions over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        featurizer: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Largest accepted `texts` batch.
        #[arg(long, default_value_t = 1024)]
        max_batch: usize,
    },
}

fn parse_target(s: &str) -> Result<(ClassLabel, usize), String> {
    let (label, count) = s.split_once('=').ok_or_else(|| format!("expected <class>=<count>, got '{s}'"))?;
    let count = count.parse().map_err(|e| format!("bad count in '{s}': {e}"))?;
    Ok((label.parse()?, count))
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::Augment { .. } => "augment",
            Command::Run { .. } => "run",
            Command::Predict { .. } => "predict",
            Command::Serve { .. } => "serve",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { data, task } => stats(&data, task, &corpus_format(cli.config.as_deref())?),
        Command::Augment { data, task, alpha, targets, ops } => {
            let out = cli.out.ok_or_else(|| anyhow!("--out is required"))?;
            let mut cfg = AugmentConfig { alpha, seed: cli.seed.unwrap_or(0), ..AugmentConfig::default() };
            cfg.target_counts = targets.into_iter().collect::<BTreeMap<_, _>>();
            if !ops.is_empty() {
                cfg.ops_enabled = ops;
            }
            augment(&data, task, &corpus_format(cli.config.as_deref())?, &cfg, &out)
        }
        Command::Run { workers } => {
            let path = cli.config.ok_or_else(|| anyhow!("--config is required"))?;
            let mut cfg = ExperimentConfig::from_file(&path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = cli.out {
                cfg.output_dir = o;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let outcome = run_experiment(&cfg)?;
            println!("{}", hopeml::metrics::format_report(&outcome.test_report));
            println!("artifacts: {}", outcome.run_dir.display());
            Ok(())
        }
        Command::Predict { model, featurizer, input, vectors, proba } => {
            let predictor = load_predictor(&model, featurizer.as_deref())?;
            predict(&predictor, input.as_deref(), vectors.as_deref(), proba)
        }
        Command::Serve { model, featurizer, bind, max_batch } => {
            let predictor = load_predictor(&model, featurizer.as_deref())?;
            if predictor.needs_vectors() {
                bail!("models trained on precomputed vectors cannot be served from raw text");
            }
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(serve::serve(predictor, bind, max_batch))
        }
    }
}

/// The corpus layout from `--config` when given, else the defaults.
fn corpus_format(config: Option<&Path>) -> Result<CorpusFormat> {
    match config {
        Some(p) => Ok(ExperimentConfig::from_file(p)?.format),
        None => Ok(CorpusFormat::default()),
    }
}

fn stats(data: &Path, task: TaskMode, format: &CorpusFormat) -> Result<()> {
    let corpus = load_corpus(data, Split::Train, task, format)?;
    let counts: BTreeMap<String, usize> =
        class_counts(&corpus).into_iter().filter(|(l, _)| task.allows(*l)).map(|(l, c)| (l.to_string(), c)).collect();
    println!("{}", serde_json::to_string(&counts)?);
    Ok(())
}

fn augment(data: &Path, task: TaskMode, format: &CorpusFormat, cfg: &AugmentConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(data, Split::Train, task, format)?;
    let balanced = balance_classes(&corpus, cfg)?;
    let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_corpus(&balanced, &format.label_map, BufWriter::new(f))
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} documents ({} new) to {}", balanced.len(), balanced.len() - corpus.len(), out.display());
    Ok(())
}

fn load_predictor(model: &Path, featurizer: Option<&Path>) -> Result<Predictor> {
    let feat = match featurizer {
        Some(p) => p.to_path_buf(),
        None => model.with_file_name("featurizer.json"),
    };
    Ok(Predictor::load(model, &feat)?)
}

fn write_line(out: &mut impl Write, label: ClassLabel, scores: &[f64], proba: bool) -> io::Result<()> {
    if proba {
        let row = serde_json::to_string(scores).map_err(io::Error::other)?;
        writeln!(out, "{label}\t{row}")
    } else {
        writeln!(out, "{label}")
    }
}

/// Streams input in fixed-size chunks so memory stays bounded.
fn predict(predictor: &Predictor, input: Option<&Path>, vectors: Option<&Path>, proba: bool) -> Result<()> {
    const CHUNK: usize = 4096;
    let start = Instant::now();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut n = 0usize;
    if let Some(v) = vectors {
        let (labels, scores) = predictor.predict_vector_path(v, None)?;
        for (l, s) in labels.iter().zip(&scores) {
            write_line(&mut out, *l, s, proba)?;
        }
        n = labels.len();
    } else {
        if predictor.needs_vectors() {
            bail!("this model reads precomputed vectors; pass --vectors");
        }
        let reader: Box<dyn BufRead> = match input {
            Some(p) => Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?)),
            None => Box::new(io::stdin().lock()),
        };
        let mut batch = Vec::with_capacity(CHUNK);
        let mut lines = reader.lines();
        loop {
            let next = lines.next().transpose()?;
            if let Some(line) = next.as_ref() {
                batch.push(line.strip_suffix('\r').unwrap_or(line).to_string());
            }
            if batch.len() == CHUNK || (next.is_none() && !batch.is_empty()) {
                let (labels, scores) = predictor.predict_texts(&batch)?;
                for (l, s) in labels.iter().zip(&scores) {
                    write_line(&mut out, *l, s, proba)?;
                }
                n += batch.len();
                batch.clear();
            }
            if next.is_none() {
                break;
            }
        }
    }
    out.flush()?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!("labelled {n} documents in {secs:.3}s ({:.0} docs/s)", n as f64 / secs.max(1e-9));
    Ok(())
}
