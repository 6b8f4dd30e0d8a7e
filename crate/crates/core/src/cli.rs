//! Command-line interface. [`run`] returns the process exit code; errors are
//! printed to stderr as one JSON object.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::data::{self, load_corpus, load_ctxemb, write_corpus, CorpusRecord, CtxEmbIndex, DataError};
use crate::evaluation::{format_table, make_folds, run_cross_validation, CvReport, EvalError, FoldMode, MetricsReport};
use crate::features::{prepare, Dataset, FeatureConfig, FeatureError};
use crate::graph::DEFAULT_MAX_PATHS;
use crate::model::check::{run_block_checks, DEFAULT_EPS};
use crate::model::{Ablation, ContextMode, ContextSource, ModelConfig, ModelError, SemSin};
use crate::penman::{parse_penman, serialize_penman};
use crate::training::{evaluate, fit, Split, TrainConfig, TrainError};

/// Largest relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Data(e) => match e {
                DataError::SchemaViolation { .. } => "SchemaViolation",
                DataError::SpanOutOfRange { .. } => "SpanOutOfRange",
                DataError::BadMagic => "BadMagic",
                DataError::TruncatedPayload { .. } => "TruncatedPayload",
                DataError::DimensionMismatch { .. } => "DimensionMismatch",
                _ => "DataError",
            },
            CliError::Feature(_) => "GraphError",
            CliError::Model(ModelError::MissingEmbeddingEntry(_)) => "MissingEmbeddingEntry",
            CliError::Model(_) => "ModelError",
            CliError::Train(TrainError::NonFiniteLoss { .. }) => "NonFiniteLoss",
            CliError::Train(_) => "TrainError",
            CliError::Eval(EvalError::TooFewTopics { .. }) => "TooFewTopics",
            CliError::Eval(_) => "EvalError",
            CliError::Io { .. } => "IoError",
            CliError::Failed(_) => "CheckFailed",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "semsin", version, about = "Event causality identification over AMR semantic structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus and its PENMAN round trip (bundled fixtures without --data)
    Check(CheckArgs),
    /// Train one model with a held-out dev split
    Train(TrainArgs),
    /// k-fold cross-validation
    Xval(XvalArgs),
    /// Score a trained model on a corpus
    Eval(ModelArgs),
    /// Write per-pair probabilities
    Predict(ModelArgs),
    /// Finite-difference gradient check of every model block
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic corpus with structural labels
    Synth(SynthArgs),
    /// Cross-validate for every RGCN depth 1..=max-layers
    GridLayers(GridArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Abort on the first malformed line
    #[arg(long)]
    fail_fast: bool,
    #[arg(long, default_value_t = 3)]
    layers: usize,
}

#[derive(Args, Debug, Clone)]
struct Hyper {
    /// Corpus (line-delimited JSON)
    #[arg(long)]
    data: PathBuf,
    /// CTXEMB1 file with contextual vectors; switches to external context mode
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// RGCN layers
    #[arg(long, default_value_t = 3)]
    layers: usize,
    /// Learning rate [default: 1e-3 internal context, 1e-5 with --embeddings]
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    /// Focal loss focusing exponent
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Weight of the positive class
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Copies of each positive pair per epoch
    #[arg(long, default_value_t = 1)]
    pos_rate: usize,
    /// Probability of keeping each negative pair per epoch
    #[arg(long, default_value_t = 1.0)]
    neg_rate: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Epochs without dev F1 improvement before stopping
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, value_enum, default_value_t = Ablation::Full)]
    ablation: Ablation,
    /// Hidden size for internal context mode
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Shortest paths kept per pair before adding reverses
    #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
    max_paths: usize,
    #[arg(long)]
    seed: u64,
    /// Abort on the first malformed corpus line
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    hyper: Hyper,
    /// Dev corpus; without it 10% of documents are held out
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct FoldArgs {
    #[arg(long, value_enum, default_value_t = FoldMode::CrossTopic)]
    mode: FoldMode,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Folds trained concurrently
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct XvalArgs {
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    folds: FoldArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    folds: FoldArgs,
    #[arg(long, default_value_t = 5)]
    max_layers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `train`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Central-difference step
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 60)]
    docs: usize,
    #[arg(long)]
    seed: u64,
    /// Corpus path; ground truth goes next to it as `<stem>.truth.jsonl`
    #[arg(long)]
    out: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

struct Loaded {
    records: Vec<CorpusRecord>,
    ds: Dataset,
    ctx: Option<CtxEmbIndex>,
}

impl Loaded {
    fn source(&self) -> ContextSource<'_> {
        match &self.ctx {
            Some(i) => ContextSource::External(i),
            None => ContextSource::Internal,
        }
    }
}

fn load(data: &Path, embeddings: Option<&Path>, layers: usize, max_paths: usize, fail_fast: bool) -> Result<Loaded, CliError> {
    let (records, report) = load_corpus(data, fail_fast)?;
    for s in &report.skipped {
        eprintln!("{}", json!({ "skipped_line": s.line, "reason": s.reason }));
    }
    let ds = prepare(&records, FeatureConfig { hops: layers, max_paths })?;
    let ctx = embeddings.map(load_ctxemb).transpose()?;
    Ok(Loaded { records, ds, ctx })
}

impl Hyper {
    fn config(&self, ctx: Option<&CtxEmbIndex>) -> Result<TrainConfig, CliError> {
        let (context, dim, lr) = match ctx {
            Some(i) => (
                ContextMode::External,
                i.dim().ok_or_else(|| CliError::Usage("embedding file is empty".into()))?,
                self.lr.unwrap_or(1e-5),
            ),
            None => (ContextMode::Internal, self.dim, self.lr.unwrap_or(1e-3)),
        };
        let cfg = TrainConfig {
            model: ModelConfig {
                dim,
                layers: self.layers,
                dropout: self.dropout,
                ablation: self.ablation,
                context,
            },
            lr,
            gamma: self.gamma,
            beta: self.beta,
            batch_size: self.batch,
            pos_rate: self.pos_rate,
            neg_rate: self.neg_rate,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            ..TrainConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn load(&self) -> Result<Loaded, CliError> {
        load(&self.data, self.embeddings.as_deref(), self.layers, self.max_paths, self.fail_fast)
    }
}

fn cmd_check(a: CheckArgs) -> Result<(), CliError> {
    let (records, skipped) = match &a.data {
        Some(p) => {
            let (r, rep) = load_corpus(p, a.fail_fast)?;
            (r, rep.skipped)
        }
        None => (data::fixtures::corpus_fixture(), Vec::new()),
    };
    let mut graphs: Vec<(String, String)> = records.iter().map(|r| (r.doc_id.clone(), r.amr.clone())).collect();
    if a.data.is_none() {
        graphs.extend(
            data::fixtures::amr_fixtures()
                .into_iter()
                .enumerate()
                .map(|(i, g)| (format!("amr-fixture-{}", i + 1), g)),
        );
    }
    let mut failures = Vec::new();
    for (id, text) in &graphs {
        let ok = parse_penman(text).and_then(|g| {
            let again = parse_penman(&serialize_penman(&g))?;
            Ok(again.signature() == g.signature() && serialize_penman(&again) == serialize_penman(&g))
        });
        match ok {
            Ok(true) => {}
            Ok(false) => failures.push(json!({ "doc_id": id, "reason": "round trip changed the graph" })),
            Err(e) => failures.push(json!({ "doc_id": id, "reason": e.to_string() })),
        }
    }
    let ds = if failures.is_empty() {
        Some(prepare(&records, FeatureConfig { hops: a.layers, max_paths: DEFAULT_MAX_PATHS })?)
    } else {
        None
    };
    let positives = records.iter().flat_map(|r| &r.pairs).filter(|p| p.label == 1).count();
    let report = json!({
        "records": records.len(),
        "graphs_checked": graphs.len(),
        "pairs": records.iter().map(|r| r.pairs.len()).sum::<usize>(),
        "positive_pairs": positives,
        "usable_pairs": ds.as_ref().map(|d| d.pairs.len()),
        "skips": ds.as_ref().map(|d| d.skips),
        "skipped_lines": skipped,
        "roundtrip_failures": failures,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} graphs failed the round trip", failures.len())))
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let h = &a.hyper;
    let mut loaded = h.load()?;
    let cfg = h.config(loaded.ctx.as_ref())?;
    let (train, dev) = match &a.dev {
        Some(dev_path) => {
            let (dev_records, _) = load_corpus(dev_path, h.fail_fast)?;
            let n_train = loaded.ds.pairs.len();
            let mut all = loaded.records.clone();
            all.extend(dev_records);
            loaded.ds = prepare(&all, FeatureConfig { hops: h.layers, max_paths: h.max_paths })?;
            let n = loaded.ds.pairs.len();
            ((0..n_train).collect::<Vec<_>>(), (n_train..n).collect::<Vec<_>>())
        }
        None => {
            let mut ids: Vec<&str> = loaded.ds.docs.iter().map(|d| d.doc_id.as_str()).collect();
            ids.sort_unstable();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(h.seed));
            let n_dev = if ids.len() > 1 { (ids.len() / 10).max(1) } else { 0 };
            let dev_docs: std::collections::BTreeSet<&str> = ids[..n_dev].iter().copied().collect();
            let dev = loaded.ds.pairs_where(|d| dev_docs.contains(d.doc_id.as_str()));
            let train = loaded.ds.pairs_where(|d| !dev_docs.contains(d.doc_id.as_str()));
            (train, dev)
        }
    };
    let split = Split {
        ds: &loaded.ds,
        train: &train,
        dev: &dev,
        context: loaded.source(),
    };
    let (model, report) = fit(split, &cfg)?;
    model.save(&a.out)?;
    write(&a.out.join("train_report.jsonl"), report.to_jsonl())?;
    write(&a.out.join("train_config.json"), to_json(&cfg))?;
    let dev_metrics = evaluate(&model, &loaded.ds, &dev, loaded.source())?;
    write(&a.out.join("metrics.json"), to_json(&dev_metrics))?;
    print!("{}", format_table(&[(format!("dev ({})", cfg.model.ablation), dev_metrics)]));
    Ok(())
}

fn cross_validate(h: &Hyper, f: &FoldArgs, loaded: &Loaded, cfg: &TrainConfig) -> Result<CvReport, CliError> {
    let docs: Vec<(String, String)> = loaded
        .ds
        .docs
        .iter()
        .map(|d| (d.doc_id.clone(), d.topic_id.clone()))
        .collect();
    let plan = make_folds(&docs, f.mode, f.k, h.seed)?;
    Ok(run_cross_validation(&loaded.ds, &plan, cfg, loaded.source(), f.jobs)?)
}

fn write_cv(out: &Path, cfg: &TrainConfig, cv: &CvReport) -> Result<(), CliError> {
    let mut preds = String::new();
    for f in &cv.folds {
        let dir = out.join(format!("fold-{}", f.fold));
        f.model.save(&dir)?;
        write(&dir.join("train_report.jsonl"), f.train.to_jsonl())?;
        for p in &f.predictions {
            preds.push_str(&serde_json::to_string(&json!({ "fold": f.fold, "prediction": p })).unwrap());
            preds.push('\n');
        }
    }
    write(&out.join("predictions.jsonl"), preds)?;
    let folds: Vec<_> = cv
        .folds
        .iter()
        .map(|f| json!({ "fold": f.fold, "metrics": f.metrics, "best_epoch": f.train.summary.best_epoch }))
        .collect();
    write(
        &out.join("metrics.json"),
        to_json(&json!({ "config": cfg, "aggregate": cv.aggregate, "folds": folds })),
    )?;
    write(&out.join("table.txt"), cv_table(cfg, cv))
}

fn cv_table(cfg: &TrainConfig, cv: &CvReport) -> String {
    let mut rows: Vec<(String, MetricsReport)> = cv.folds.iter().map(|f| (format!("fold {}", f.fold), f.metrics)).collect();
    rows.push((format!("SemSIn ({})", cfg.model.ablation), cv.aggregate));
    format_table(&rows)
}

fn cmd_xval(a: XvalArgs) -> Result<(), CliError> {
    let loaded = a.hyper.load()?;
    let cfg = a.hyper.config(loaded.ctx.as_ref())?;
    let cv = cross_validate(&a.hyper, &a.folds, &loaded, &cfg)?;
    if let Some(out) = &a.out {
        write_cv(out, &cfg, &cv)?;
    }
    print!("{}", cv_table(&cfg, &cv));
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<(), CliError> {
    if a.max_layers == 0 {
        return Err(CliError::Usage("--max-layers must be >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for l in 1..=a.max_layers {
        let mut h = a.hyper.clone();
        h.layers = l;
        let loaded = h.load()?;
        let cfg = h.config(loaded.ctx.as_ref())?;
        let cv = cross_validate(&h, &a.folds, &loaded, &cfg)?;
        if let Some(out) = &a.out {
            write_cv(&out.join(format!("layers-{l}")), &cfg, &cv)?;
        }
        records.push(json!({ "layers": l, "metrics": cv.aggregate }));
        rows.push((format!("L={l}"), cv.aggregate));
    }
    if let Some(out) = &a.out {
        write(&out.join("grid.json"), to_json(&records))?;
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn load_for_model(a: &ModelArgs) -> Result<(SemSin, Loaded), CliError> {
    let model = SemSin::load(&a.model)?;
    let loaded = load(&a.data, a.embeddings.as_deref(), model.config.layers, DEFAULT_MAX_PATHS, false)?;
    match (model.config.context, &loaded.ctx) {
        (ContextMode::External, None) => Err(CliError::Usage("model expects --embeddings".into())),
        (ContextMode::Internal, Some(_)) => Err(CliError::Usage("model uses internal context; drop --embeddings".into())),
        _ => Ok((model, loaded)),
    }
}

fn cmd_eval(a: ModelArgs) -> Result<(), CliError> {
    let (model, loaded) = load_for_model(&a)?;
    let all: Vec<usize> = (0..loaded.ds.pairs.len()).collect();
    let m = evaluate(&model, &loaded.ds, &all, loaded.source())?;
    if let Some(out) = &a.out {
        write(out, to_json(&m))?;
    }
    print!("{}", format_table(&[(format!("SemSIn ({})", model.config.ablation), m)]));
    Ok(())
}

fn cmd_predict(a: ModelArgs) -> Result<(), CliError> {
    let (model, loaded) = load_for_model(&a)?;
    let all: Vec<usize> = (0..loaded.ds.pairs.len()).collect();
    let probs = model.predict(&loaded.ds, &all, loaded.source())?;
    let mut text = String::new();
    for (&i, p) in all.iter().zip(&probs) {
        let ex = &loaded.ds.pairs[i];
        let rec = &loaded.records[ex.doc];
        let pair = &rec.pairs[ex.pair_index];
        let line = json!({
            "doc_id": rec.doc_id,
            "pair_index": ex.pair_index,
            "e1": pair.e1,
            "e2": pair.e2,
            "p_causal": p[1],
            "prediction": u8::from(p[1] > p[0]),
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    match &a.out {
        Some(out) => write(out, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    if !(a.eps > 0.0) {
        return Err(CliError::Usage("--eps must be positive".into()));
    }
    let checks = run_block_checks(a.eps)?;
    let mut worst: f64 = 0.0;
    for c in &checks {
        println!("{}", serde_json::to_string(c).unwrap());
        worst = worst.max(c.max_rel_error);
    }
    println!("{}", json!({ "max_rel_error": worst, "tolerance": GRADCHECK_TOLERANCE }));
    if worst <= GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Failed(format!("max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}")))
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    if a.docs < 20 {
        return Err(CliError::Usage("--docs must be >= 20".into()));
    }
    let corpus = data::gen_synthetic(a.docs, a.seed);
    let mut buf = Vec::new();
    write_corpus(&corpus.records, &mut buf).map_err(|e| io_err(&a.out, e))?;
    write(&a.out, buf)?;
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let truth_path = a.out.with_file_name(format!("{stem}.truth.jsonl"));
    let mut truth = String::new();
    for t in &corpus.truth {
        truth.push_str(&serde_json::to_string(t).unwrap());
        truth.push('\n');
    }
    write(&truth_path, truth)?;
    println!(
        "{}",
        json!({ "documents": corpus.records.len(), "pairs": corpus.truth.len(), "corpus": a.out, "truth": truth_path })
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Train(a) => cmd_train(a),
        Command::Xval(a) => cmd_xval(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
        Command::GridLayers(a) => cmd_grid(a),
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Exit codes: 0 success, 1 failure, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "UsageError", "message": msg.trim() }));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            if matches!(e, CliError::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}
