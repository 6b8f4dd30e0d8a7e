//! Focal loss, epoch sampling and the mini-batch training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{prf1, MetricsReport};
use crate::features::{Dataset, SkipCounts};
use crate::model::{ContextSource, ForwardCache, Mode, ModelConfig, ModelError, ModelVocabs, SemSin};
use crate::numerics::{adamw_step, AdamWConfig, NumericsError, OptimizerState, Tape, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub pos_rate: usize,
    pub neg_rate: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a dev F1 improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 1e-3,
            weight_decay: AdamWConfig::default().weight_decay,
            gamma: 2.0,
            beta: 0.5,
            batch_size: 20,
            pos_rate: 1,
            neg_rate: 1.0,
            epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        let bad = |m: String| Err(TrainError::Config(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(self.neg_rate > 0.0 && self.neg_rate <= 1.0) {
            return bad(format!("neg-rate {} outside (0, 1]", self.neg_rate));
        }
        if self.pos_rate < 1 {
            return bad("pos-rate must be >= 1".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be >= 1".into());
        }
        if !(self.lr >= 0.0) {
            return bad(format!("learning rate {} must be >= 0", self.lr));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

pub const PROB_FLOOR: f64 = 1e-12;

fn class_weight(label: u8, beta: f64) -> f64 {
    if label == 1 {
        beta
    } else {
        1.0 - beta
    }
}

/// `-w (1 - p_t)^gamma ln p_t` with `p_t = p[label]` clamped to `[1e-12, 1]`.
pub fn focal_loss(p: [f64; 2], label: u8, beta: f64, gamma: f64) -> Result<f64, TrainError> {
    for v in p {
        if !(0.0..=1.0).contains(&v) {
            return Err(TrainError::InvalidProbability(v));
        }
    }
    if (p[0] + p[1] - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidProbability(p[0] + p[1]));
    }
    let pt = p[usize::from(label)].clamp(PROB_FLOOR, 1.0);
    Ok(-class_weight(label, beta) * (1.0 - pt).powf(gamma) * pt.ln())
}

/// Tape version of [`focal_loss`] over a `1 x 2` probability row.
pub fn focal_loss_var(tape: &mut Tape<'_>, probs: Var, label: u8, beta: f64, gamma: f64) -> Result<Var, NumericsError> {
    let pt = tape.slice_cols(probs, usize::from(label), 1)?;
    let pt = tape.clamp_min(pt, PROB_FLOOR);
    let log = tape.ln(pt);
    let weighted = if gamma == 0.0 {
        log
    } else {
        let neg = tape.scale(pt, -1.0);
        let one_minus = tape.add_scalar(neg, 1.0);
        let m = tape.powf(one_minus, gamma);
        tape.mul(m, log)?
    };
    Ok(tape.scale(weighted, -class_weight(label, beta)))
}

/// Positives repeated `pos_rate` times, negatives kept with probability
/// `neg_rate`, then shuffled.
pub fn sample_epoch(pairs: &[(usize, u8)], pos_rate: usize, neg_rate: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(pairs.len() * pos_rate);
    for &(i, label) in pairs {
        if label == 1 {
            out.extend(std::iter::repeat_n(i, pos_rate));
        } else if rng.random::<f64>() < neg_rate {
            out.push(i);
        }
    }
    out.shuffle(rng);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub dev: MetricsReport,
    /// Mean focal loss over dev pairs.
    pub dev_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub epochs_configured: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub skips: SkipCounts,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub summary: TrainSummary,
}

impl TrainReport {
    /// One JSON object per epoch, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            s.push_str(&serde_json::to_string(e).unwrap());
            s.push('\n');
        }
        s.push_str(&serde_json::json!({ "summary": self.summary }).to_string());
        s.push('\n');
        s
    }
}

/// Pairs to train on and to select checkpoints with.
#[derive(Clone, Copy)]
pub struct Split<'a> {
    pub ds: &'a Dataset,
    pub train: &'a [usize],
    pub dev: &'a [usize],
    pub context: ContextSource<'a>,
}

fn batch_loss(
    model: &SemSin,
    split: &Split<'_>,
    batch: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, crate::numerics::Gradients), TrainError> {
    let mut tape = Tape::new(&model.params);
    let mut cache = ForwardCache::new();
    let mut mode = Mode::Train(rng);
    let mut losses = Vec::with_capacity(batch.len());
    for &i in batch {
        let ex = &split.ds.pairs[i];
        let out = model.forward_pair(&mut tape, split.ds, ex, split.context, &mut mode, &mut cache)?;
        losses.push(focal_loss_var(&mut tape, out.probs, ex.label, cfg.beta, cfg.gamma)?);
    }
    let all = tape.concat_cols(&losses)?;
    let total = tape.sum(all);
    let value = tape.value(total).item();
    Ok((value, tape.backward(total)?))
}

pub fn evaluate(model: &SemSin, ds: &Dataset, pairs: &[usize], ctx: ContextSource<'_>) -> Result<MetricsReport, TrainError> {
    Ok(evaluate_with_loss(model, ds, pairs, ctx, 0.5, 0.0)?.0)
}

/// Metrics and mean focal loss (0 for an empty set) with dropout off.
pub fn evaluate_with_loss(
    model: &SemSin,
    ds: &Dataset,
    pairs: &[usize],
    ctx: ContextSource<'_>,
    beta: f64,
    gamma: f64,
) -> Result<(MetricsReport, f64), TrainError> {
    let probs = model.predict(ds, pairs, ctx)?;
    let preds: Vec<u8> = probs.iter().map(|p| u8::from(p[1] > p[0])).collect();
    let labels: Vec<u8> = pairs.iter().map(|&i| ds.pairs[i].label).collect();
    let mut loss = 0.0;
    for (p, &l) in probs.iter().zip(&labels) {
        loss += focal_loss(*p, l, beta, gamma)?;
    }
    let metrics = prf1(&preds, &labels).map_err(|e| TrainError::Config(e.to_string()))?;
    Ok((metrics, if pairs.is_empty() { 0.0 } else { loss / pairs.len() as f64 }))
}

/// Mini-batch AdamW on focal loss; returns the parameters of the epoch with
/// the best dev F1, ties going to the lower dev loss (the latest epoch when
/// no dev pairs are given).
pub fn fit(split: Split<'_>, cfg: &TrainConfig) -> Result<(SemSin, TrainReport), TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let docs = split.train.iter().map(|&i| split.ds.pairs[i].doc);
    let vocabs = ModelVocabs::build(split.ds, docs);
    let mut model = SemSin::new(cfg.model.clone(), vocabs, cfg.seed)?;
    let mut opt = OptimizerState::new(&model.params, cfg.adamw());
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let labeled: Vec<(usize, u8)> = split.train.iter().map(|&i| (i, split.ds.pairs[i].label)).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, f64, crate::numerics::ParamStore)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let order = sample_epoch(&labeled, cfg.pos_rate, cfg.neg_rate, &mut sample_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_loss(&model, &split, batch, cfg, &mut dropout_rng)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            adamw_step(&mut model.params, &grads, &mut opt)?;
            total += loss;
            batches += 1;
        }
        let (dev, dev_loss) = evaluate_with_loss(&model, split.ds, split.dev, split.context, cfg.beta, cfg.gamma)?;
        let f1 = dev.f1;
        epochs.push(EpochRecord {
            epoch,
            loss: if batches > 0 { total / batches as f64 } else { 0.0 },
            dev,
            dev_loss,
            wall_ms: t0.elapsed().as_millis() as u64,
        });
        let improved = match &best {
            None => true,
            Some((_, bf, bl, _)) => f1 > *bf || (f1 == *bf && dev_loss < *bl) || split.dev.is_empty(),
        };
        if improved {
            best = Some((epoch, f1, dev_loss, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_dev_f1, _, params) = best.expect("at least one epoch");
    model.params = params;
    let summary = TrainSummary {
        epochs_run: epochs.len(),
        epochs_configured: cfg.epochs,
        stopped_early: epochs.len() < cfg.epochs,
        best_epoch,
        best_dev_f1,
        train_pairs: split.train.len(),
        dev_pairs: split.dev.len(),
        skips: split.ds.skips,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    Ok((model, TrainReport { epochs, summary }))
}
