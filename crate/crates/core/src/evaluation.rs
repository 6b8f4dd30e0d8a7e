//! Precision/recall/F1, fold plans and k-fold cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Dataset;
use crate::model::{ContextSource, SemSin};
use crate::training::{fit, Split, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("non-binary value {0}")]
    NonBinary(u8),
    #[error("{found} topics cannot fill {k} folds plus two dev topics")]
    TooFewTopics { k: usize, found: usize },
    #[error("{found} documents cannot fill {k} folds")]
    TooFewDocuments { k: usize, found: usize },
    #[error("fold count must be >= 2, got {0}")]
    BadFoldCount(usize),
    #[error("fold {fold}: {source}")]
    Train {
        fold: usize,
        #[source]
        source: TrainError,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn merge(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Percentages, rounded to one decimal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let ratio = |a: usize, b: usize| if b > 0 { 100.0 * a as f64 / b as f64 } else { 0.0 };
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        MetricsReport {
            precision: round1(p),
            recall: round1(r),
            f1: round1(f1_from(p, r)),
            confusion: c,
        }
    }
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<Confusion, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            (v, 0 | 1) | (_, v) => return Err(EvalError::NonBinary(v)),
        }
    }
    Ok(c)
}

pub fn prf1(predictions: &[u8], labels: &[u8]) -> Result<MetricsReport, EvalError> {
    Ok(MetricsReport::from_confusion(confusion(predictions, labels)?))
}

/// Aligned `Method  P  R  F1` table.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let w = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Method".len());
    let mut s = format!("{:<w$}  {:>5}  {:>5}  {:>5}\n", "Method", "P", "R", "F1");
    for (m, r) in rows {
        s.push_str(&format!(
            "{:<w$}  {:>5.1}  {:>5.1}  {:>5.1}\n",
            m, r.precision, r.recall, r.f1
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FoldMode {
    /// Whole topics move together; the last two topics are the dev set.
    CrossTopic,
    /// Documents shuffled by id; dev carved from each fold's training side.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub k: usize,
    /// Test fold of each non-dev document.
    pub assignments: BTreeMap<String, usize>,
    /// Dev documents of each fold; excluded from that fold's training set.
    pub dev: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn test_docs(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    pub fn train_docs(&self, fold: usize) -> Vec<&str> {
        let dev: BTreeSet<&str> = self.dev[fold].iter().map(String::as_str).collect();
        self.assignments
            .iter()
            .filter(|(d, &f)| f != fold && !dev.contains(d.as_str()))
            .map(|(d, _)| d.as_str())
            .collect()
    }
}

fn sort_topics(topics: &mut [String]) {
    if topics.iter().all(|t| t.parse::<u64>().is_ok()) {
        topics.sort_by_key(|t| t.parse::<u64>().unwrap());
    } else {
        topics.sort();
    }
}

/// Sizes of `k` contiguous blocks covering `n` items, larger blocks first.
fn block_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// `docs` holds `(doc_id, topic_id)` for every document.
pub fn make_folds(docs: &[(String, String)], mode: FoldMode, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::BadFoldCount(k));
    }
    let mut assignments = BTreeMap::new();
    let dev = match mode {
        FoldMode::CrossTopic => {
            let mut topics: Vec<String> = docs.iter().map(|(_, t)| t.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            if topics.len() < k + 2 {
                return Err(EvalError::TooFewTopics { k, found: topics.len() });
            }
            sort_topics(&mut topics);
            let dev_topics: BTreeSet<&String> = topics[topics.len() - 2..].iter().collect();
            let mut fold_of = BTreeMap::new();
            let mut start = 0;
            for (f, size) in block_sizes(topics.len() - 2, k).into_iter().enumerate() {
                for t in &topics[start..start + size] {
                    fold_of.insert(t.clone(), f);
                }
                start += size;
            }
            let mut held = Vec::new();
            for (d, t) in docs {
                if dev_topics.contains(t) {
                    held.push(d.clone());
                } else {
                    assignments.insert(d.clone(), fold_of[t]);
                }
            }
            held.sort();
            vec![held; k]
        }
        FoldMode::Random => {
            if docs.len() < k {
                return Err(EvalError::TooFewDocuments { k, found: docs.len() });
            }
            let mut ids: Vec<String> = docs.iter().map(|(d, _)| d.clone()).collect();
            ids.sort();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut start = 0;
            let mut blocks = Vec::with_capacity(k);
            for (f, size) in block_sizes(ids.len(), k).into_iter().enumerate() {
                for d in &ids[start..start + size] {
                    assignments.insert(d.clone(), f);
                }
                blocks.push(start..start + size);
                start += size;
            }
            blocks
                .iter()
                .map(|test| {
                    let train: Vec<&String> = ids
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !test.contains(i))
                        .map(|(_, d)| d)
                        .collect();
                    let n_dev = if train.len() > 1 { (train.len() / 10).max(1) } else { 0 };
                    let mut dev: Vec<String> = train[train.len() - n_dev..].iter().map(|d| d.to_string()).collect();
                    dev.sort();
                    dev
                })
                .collect()
        }
    };
    Ok(FoldPlan {
        mode,
        k,
        assignments,
        dev,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub doc_id: String,
    pub pair_index: usize,
    pub label: u8,
    pub prob: f64,
    pub prediction: u8,
}

pub struct FoldResult {
    pub fold: usize,
    pub metrics: MetricsReport,
    pub train: TrainReport,
    pub predictions: Vec<PairPrediction>,
    pub model: SemSin,
}

pub struct CvReport {
    pub aggregate: MetricsReport,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    /// Pooled metrics over the test predictions accepted by `keep`.
    pub fn pooled_where(&self, mut keep: impl FnMut(&PairPrediction) -> bool) -> MetricsReport {
        let (p, l): (Vec<u8>, Vec<u8>) = self
            .folds
            .iter()
            .flat_map(|f| &f.predictions)
            .filter(|p| keep(p))
            .map(|p| (p.prediction, p.label))
            .unzip();
        prf1(&p, &l).expect("binary predictions")
    }
}

fn pairs_of(ds: &Dataset, docs: &[&str]) -> Vec<usize> {
    let set: BTreeSet<&str> = docs.iter().copied().collect();
    ds.pairs_where(|d| set.contains(d.doc_id.as_str()))
}

fn run_fold(ds: &Dataset, plan: &FoldPlan, cfg: &TrainConfig, ctx: ContextSource<'_>, fold: usize) -> Result<FoldResult, EvalError> {
    let err = |source| EvalError::Train { fold, source };
    let train = pairs_of(ds, &plan.train_docs(fold));
    let dev_ids: Vec<&str> = plan.dev[fold].iter().map(String::as_str).collect();
    let dev = pairs_of(ds, &dev_ids);
    let test = pairs_of(ds, &plan.test_docs(fold));
    let mut fold_cfg = cfg.clone();
    fold_cfg.seed = cfg.seed.wrapping_add(fold as u64);
    let split = Split {
        ds,
        train: &train,
        dev: &dev,
        context: ctx,
    };
    let (model, report) = fit(split, &fold_cfg).map_err(err)?;
    let probs = model.predict(ds, &test, ctx).map_err(|e| err(e.into()))?;
    let predictions: Vec<PairPrediction> = test
        .iter()
        .zip(&probs)
        .map(|(&i, p)| {
            let ex = &ds.pairs[i];
            PairPrediction {
                doc_id: ds.docs[ex.doc].doc_id.clone(),
                pair_index: ex.pair_index,
                label: ex.label,
                prob: p[1],
                prediction: u8::from(p[1] > p[0]),
            }
        })
        .collect();
    let (pr, lb): (Vec<u8>, Vec<u8>) = predictions.iter().map(|p| (p.prediction, p.label)).unzip();
    Ok(FoldResult {
        fold,
        metrics: prf1(&pr, &lb)?,
        train: report,
        predictions,
        model,
    })
}

/// Trains one model per fold and pools the test confusion counts. Folds run
/// on up to `jobs` threads; results do not depend on `jobs`.
pub fn run_cross_validation(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &TrainConfig,
    ctx: ContextSource<'_>,
    jobs: usize,
) -> Result<CvReport, EvalError> {
    let run = || -> Result<Vec<FoldResult>, EvalError> {
        (0..plan.k).into_par_iter().map(|f| run_fold(ds, plan, cfg, ctx, f)).collect()
    };
    let folds = if jobs <= 1 {
        (0..plan.k).map(|f| run_fold(ds, plan, cfg, ctx, f)).collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::Pool(e.to_string()))?
            .install(run)?
    };
    let pooled = folds
        .iter()
        .fold(Confusion::default(), |acc, f| acc.merge(f.metrics.confusion));
    Ok(CvReport {
        aggregate: MetricsReport::from_confusion(pooled),
        folds,
    })
}
