//! Training loop: class-balanced down-sampled batches, SGD on the NLL loss,
//! per-epoch dev evaluation, patience-based early stopping and random
//! restarts with best-on-dev selection.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder_input::{pad_batch, EncodedExample};
use crate::error::{Error, Result};
use crate::label::{Label, NUM_CLASSES};
use crate::metrics::{metrics_report, MetricsReport};
use crate::net::{init_params, loss_and_grad, predict, ModelConfig, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StoppingCriterion {
    #[serde(rename = "macro_f1_all")]
    MacroF1All,
    #[serde(rename = "macro_f1_pos")]
    MacroF1Pos,
}

impl StoppingCriterion {
    pub fn as_str(self) -> &'static str {
        match self {
            StoppingCriterion::MacroF1All => "macro_f1_all",
            StoppingCriterion::MacroF1Pos => "macro_f1_pos",
        }
    }

    pub fn score(self, report: &MetricsReport) -> f64 {
        match self {
            StoppingCriterion::MacroF1All => report.macro_all.f1,
            StoppingCriterion::MacroF1Pos => report.macro_pos.f1,
        }
    }
}

impl fmt::Display for StoppingCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StoppingCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "macro_f1_all" => Ok(StoppingCriterion::MacroF1All),
            "macro_f1_pos" => Ok(StoppingCriterion::MacroF1Pos),
            other => Err(format!("unknown criterion `{other}` (expected macro_f1_all or macro_f1_pos)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub num_restarts: usize,
    pub stopping_criterion: StoppingCriterion,
    pub learning_rate: f64,
    pub master_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 40,
            patience: 10,
            num_restarts: 20,
            stopping_criterion: StoppingCriterion::MacroF1Pos,
            learning_rate: 1e-3,
            master_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < NUM_CLASSES {
            return Err(Error::TrainConfig(format!(
                "batch_size {} is smaller than the {NUM_CLASSES} classes",
                self.batch_size
            )));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::TrainConfig(format!(
                "max_epochs and patience must be positive, got {} and {}",
                self.max_epochs, self.patience
            )));
        }
        if self.num_restarts == 0 {
            return Err(Error::TrainConfig("num_restarts must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Draws batches in which every present class is equally likely per slot.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    /// Instance indices per present class.
    pools: Vec<Vec<usize>>,
    batch_size: usize,
    dataset_len: usize,
}

impl BalancedSampler {
    pub fn new(labels: &[Label], batch_size: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::TrainConfig("batch_size must be positive".into()));
        }
        let mut pools = vec![Vec::new(); NUM_CLASSES];
        for (i, l) in labels.iter().enumerate() {
            pools[l.index()].push(i);
        }
        pools.retain(|p| !p.is_empty());
        Ok(BalancedSampler {
            pools,
            batch_size,
            dataset_len: labels.len(),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset_len.div_ceil(self.batch_size)
    }

    /// Class uniformly among present classes, then an instance uniformly
    /// within it, with replacement.
    pub fn next_batch<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.batch_size)
            .map(|_| {
                let pool = &self.pools[rng.random_range(0..self.pools.len())];
                pool[rng.random_range(0..pool.len())]
            })
            .collect()
    }

    pub fn epoch<R: Rng>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        (0..self.batches_per_epoch()).map(|_| self.next_batch(rng)).collect()
    }
}

/// One epoch of balanced batches over `labels`.
pub fn make_balanced_batches<R: Rng>(labels: &[Label], batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    Ok(BalancedSampler::new(labels, batch_size)?.epoch(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Decides after the last entry of `scores` (one per finished epoch).
///
/// Stops once `patience` consecutive epochs failed to strictly exceed the
/// best score seen before them, or at `max_epochs`.
pub fn early_stop_check(scores: &[f64], patience: usize, max_epochs: usize) -> StopDecision {
    if scores.len() >= max_epochs {
        return StopDecision::Stop;
    }
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    for &s in scores {
        if s > best {
            best = s;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    if !scores.is_empty() && stale >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub criterion_score: f64,
    pub dev_report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub criterion: StoppingCriterion,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_epoch: usize,
}

impl TrainHistory {
    pub fn best_score(&self) -> f64 {
        self.epochs
            .get(self.best_epoch.wrapping_sub(1))
            .map_or(f64::NEG_INFINITY, |e| e.criterion_score)
    }

    pub fn best_report(&self) -> Option<&MetricsReport> {
        self.epochs.get(self.best_epoch.wrapping_sub(1)).map(|e| &e.dev_report)
    }

    /// One line per epoch, then a summary line.
    pub fn to_log(&self, restart_index: usize) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let r = &e.dev_report;
            let _ = writeln!(
                s,
                "epoch={}\ttrain_loss={:.6}\tcriterion={}\tscore={:.6}\tmacro_all_f1={:.6}\tmicro_all_f1={:.6}\tmacro_pos_f1={:.6}\tmicro_pos_f1={:.6}",
                e.epoch,
                e.train_loss,
                self.criterion,
                e.criterion_score,
                r.macro_all.f1,
                r.micro_all.f1,
                r.macro_pos.f1,
                r.micro_pos.f1
            );
        }
        let _ = writeln!(
            s,
            "best_epoch={}\tstop_epoch={}\trestart_index={restart_index}",
            self.best_epoch, self.stop_epoch
        );
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters as they were after `history.best_epoch`.
    pub params: ModelParams<T>,
    pub history: TrainHistory,
}

/// Encoded train and dev sets plus the id used for padding.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a [EncodedExample],
    pub dev: &'a [EncodedExample],
    pub pad_id: u32,
}

/// Predictions for every example, in order, batched by `batch_size`.
pub fn predict_all<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
    batch_size: usize,
    pad_id: u32,
) -> Result<Vec<Label>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        out.extend(predict(params, &pad_batch(chunk, pad_id, None))?);
    }
    Ok(out)
}

pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[EncodedExample],
    batch_size: usize,
    pad_id: u32,
) -> Result<MetricsReport> {
    let preds = predict_all(params, examples, batch_size, pad_id)?;
    let golds: Vec<Label> = examples.iter().map(|e| e.label).collect();
    metrics_report(&preds, &golds)
}

/// One training run from the initialization given by `seed`.
pub fn train_one<T: Scalar>(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: TrainData<'_>,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.dev.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params: ModelParams<T> = init_params(model_cfg, seed)?;
    let labels: Vec<Label> = data.train.iter().map(|e| e.label).collect();
    let sampler = BalancedSampler::new(&labels, cfg.batch_size)?;
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(2);
    let lr = T::of(cfg.learning_rate);

    let mut history = TrainHistory {
        criterion: cfg.stopping_criterion,
        epochs: Vec::new(),
        best_epoch: 0,
        stop_epoch: 0,
    };
    let mut best: Option<ModelParams<T>> = None;
    let mut scores = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let batches = sampler.epoch(&mut batch_rng);
        let n_batches = batches.len();
        for idx in batches {
            let batch = pad_batch(idx.iter().map(|&i| &data.train[i]), data.pad_id, None);
            let step = match loss_and_grad(&params, &batch, Some(&mut dropout_rng)) {
                Ok(g) if g.loss.is_finite() => g,
                Ok(_) | Err(Error::NonFiniteGradient(_)) => {
                    history.stop_epoch = epoch;
                    return Err(Error::Diverged {
                        epoch,
                        history: Box::new(history),
                    });
                }
                Err(e) => return Err(e),
            };
            loss_sum += step.loss.as_f64();
            params.sgd_step(&step.grads, lr);
        }
        let report = evaluate(&params, data.dev, cfg.batch_size, data.pad_id)?;
        let score = cfg.stopping_criterion.score(&report);
        if score > history.best_score() {
            history.best_epoch = epoch;
            best = Some(params.clone());
        }
        scores.push(score);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            criterion_score: score,
            dev_report: report,
        });
        history.stop_epoch = epoch;
        if early_stop_check(&scores, cfg.patience, cfg.max_epochs) == StopDecision::Stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.unwrap_or(params),
        history,
    })
}

#[derive(Debug, Clone)]
pub struct RestartOutcome<T> {
    pub best: TrainOutcome<T>,
    pub restart_index: usize,
    /// Best dev score of every restart; `None` for diverged runs.
    pub scores: Vec<Option<f64>>,
}

/// Runs `num_restarts` trainings (restart `i` uses seed `master_seed + i`)
/// and keeps the one with the highest dev score; ties go to the lower index.
pub fn run_restarts<T: Scalar>(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: TrainData<'_>,
) -> Result<RestartOutcome<T>> {
    cfg.validate()?;
    let results: Vec<Result<TrainOutcome<T>>> = (0..cfg.num_restarts)
        .into_par_iter()
        .map(|i| train_one(cfg, model_cfg, data, cfg.master_seed.wrapping_add(i as u64)))
        .collect();
    select_best(results)
}

fn select_best<T>(results: Vec<Result<TrainOutcome<T>>>) -> Result<RestartOutcome<T>> {
    let n = results.len();
    let mut scores = Vec::with_capacity(n);
    let mut best: Option<(usize, TrainOutcome<T>)> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => {
                let s = out.history.best_score();
                scores.push(Some(s));
                if best.as_ref().is_none_or(|(_, b)| s > b.history.best_score()) {
                    best = Some((i, out));
                }
            }
            Err(Error::Diverged { .. }) => scores.push(None),
            Err(e) => return Err(e),
        }
    }
    let (restart_index, best) = best.ok_or(Error::AllRestartsDiverged(n))?;
    Ok(RestartOutcome {
        best,
        restart_index,
        scores,
    })
}
