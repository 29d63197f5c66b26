use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, global_norm, AdamConfig, OptimizerState};
use super::config::TrainConfig;
use super::loss::smape_loss;
use crate::autodiff::{Tape, Tensor};
use crate::dataset::{admissible_splits, sample_slice, Dataset, FeatureSpec, ForecastTask, TimeSeries};
use crate::model::{forward_task, ForwardOptions, GlobalParams, ModelVars};
use crate::{Error, ErrorKind, Result};

/// Steps between parameter snapshots.
pub const CHECKPOINT_EVERY: usize = 50;
/// Snapshots averaged into the final model.
pub const CHECKPOINTS_AVERAGED: usize = 5;
/// Consecutive skipped steps tolerated before training aborts.
pub const MAX_CONSECUTIVE_SKIPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub params: GlobalParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    /// Mean batch loss; NaN when the forward pass failed.
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Average of the last checkpoints, or the live parameters if none.
    pub params: GlobalParams,
    pub log: Vec<LogEntry>,
    /// The retained (at most [`CHECKPOINTS_AVERAGED`]) snapshots.
    pub checkpoints: Vec<Checkpoint>,
    /// Every step at which a snapshot was taken.
    pub checkpoint_steps: Vec<usize>,
    pub skipped_steps: usize,
}

/// A training task together with the seed of its zoneout masks.
#[derive(Clone, Debug)]
pub struct BatchTask {
    pub task: ForecastTask,
    pub seed: u64,
}

/// Series with at least one admissible training slice.
pub fn eligible_series<'a>(
    series: &'a [TimeSeries],
    horizon: usize,
    min_history: usize,
) -> Vec<&'a TimeSeries> {
    series
        .iter()
        .filter(|s| admissible_splits(s.len(), horizon, min_history).is_some())
        .collect()
}

/// Draws `size` tasks uniformly over series, then uniformly over splits.
pub fn sample_batch<R: Rng + ?Sized>(
    series: &[&TimeSeries],
    params: &GlobalParams,
    min_history: usize,
    size: usize,
    features: &Arc<FeatureSpec>,
    rng: &mut R,
) -> Result<Vec<BatchTask>> {
    if series.is_empty() {
        return Err(Error::Data("no series to sample from".into()));
    }
    let cfg = &params.config;
    (0..size)
        .map(|_| {
            let s = series[rng.gen_range(0..series.len())];
            let task = sample_slice(s, cfg.context_len, cfg.horizon, min_history, features, rng)?;
            Ok(BatchTask {
                task,
                seed: rng.gen(),
            })
        })
        .collect()
}

/// Loss of one task on `tape`, against the scaled horizon observations.
pub fn task_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &GlobalParams,
    item: &BatchTask,
    opts: &ForwardOptions,
) -> Result<crate::autodiff::Var> {
    let target = item
        .task
        .target
        .as_ref()
        .ok_or_else(|| Error::Data(format!("task {} has no target", item.task.item_id)))?;
    let scaled: Vec<f64> = target.iter().map(|z| z / item.task.scale).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(item.seed);
    let out = forward_task(tape, vars, params, &item.task, opts, &mut rng)?;
    let f = tape.concat_rows(&out.forecasts)?;
    smape_loss(tape, f, &scaled)
}

/// Mean task loss of a whole batch recorded on a single tape.
pub fn batch_loss_on_tape(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &GlobalParams,
    batch: &[BatchTask],
    opts: &ForwardOptions,
) -> Result<crate::autodiff::Var> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut total = None;
    for item in batch {
        let l = task_loss(tape, vars, params, item, opts)?;
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l)?,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(tape.scale(total, 1.0 / batch.len() as f64)?)
}

/// Mean loss and its gradient for every parameter tensor.
///
/// Tasks run on separate tapes in parallel; their gradients are summed in
/// task order, so the result does not depend on scheduling.
pub fn batch_gradient(
    params: &GlobalParams,
    batch: &[BatchTask],
    opts: &ForwardOptions,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let per_task = batch
        .par_iter()
        .map(|item| {
            let mut tape = Tape::new();
            let vars = ModelVars::register(&mut tape, params, true)?;
            let loss = task_loss(&mut tape, &vars, params, item, opts)?;
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars
                .all
                .iter()
                .zip(params.tensors())
                .map(|(&v, p)| grads.wrt_or_zeros(v, p))
                .collect();
            Ok((tape.value(loss).item(), g))
        })
        .collect::<Result<Vec<_>>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut total: Vec<Tensor> = params
        .tensors()
        .map(|t| Tensor::zeros(t.rows(), t.cols()))
        .collect();
    for (l, g) in per_task {
        loss += l;
        for (acc, gi) in total.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    for t in &mut total {
        t.scale_inplace(inv);
    }
    Ok((loss * inv, total))
}

/// Initial parameters for `cfg` on `dataset`, drawn from the init stream.
pub fn init_params(dataset: &Dataset, cfg: &TrainConfig) -> Result<GlobalParams> {
    let model = cfg.model_config(dataset.meta.freq, dataset.meta.prediction_length)?;
    GlobalParams::init(model, &mut ChaCha8Rng::seed_from_u64(cfg.seed_init))
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(dataset, cfg, |_, _| Ok(()))
}

/// Trains global parameters, calling `observer(step, live_params)` after
/// every step.
pub fn train_with_observer<F>(dataset: &Dataset, cfg: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &GlobalParams) -> Result<()>,
{
    let mut params = init_params(dataset, cfg)?;
    let horizon = params.config.horizon;
    let min_history = cfg.effective_min_history(horizon);
    let series = eligible_series(&dataset.series, horizon, min_history);
    if series.is_empty() {
        return Err(Error::Data(format!(
            "no series has {min_history} observations plus a horizon of {horizon}"
        )));
    }
    let features = Arc::new(params.config.features.clone());
    let opts = ForwardOptions::training(cfg.adaptation, cfg.strategy);
    let adam = AdamConfig::new(cfg.learning_rate);
    let mut state = OptimizerState::new(&params);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed_batch);

    let mut log = Vec::with_capacity(cfg.num_steps);
    let mut kept: VecDeque<Checkpoint> = VecDeque::with_capacity(CHECKPOINTS_AVERAGED);
    let mut checkpoint_steps = Vec::new();
    let mut skipped_steps = 0;
    let mut consecutive = 0;
    let mut warned_flat = false;
    for step in 1..=cfg.num_steps {
        let started = Instant::now();
        let batch = sample_batch(&series, &params, min_history, cfg.minibatch_size, &features, &mut batch_rng)?;
        let (loss, grad_norm, skipped) = match batch_gradient(&params, &batch, &opts) {
            Ok((loss, grads)) if loss.is_finite() => {
                let r = adam_step(&mut params, &grads, &mut state, &adam)?;
                (loss, r.grad_norm, r.skipped)
            }
            Ok((loss, grads)) => {
                state.step += 1;
                log::warn!("step {step}: non-finite loss, update skipped");
                (loss, global_norm(&grads), true)
            }
            Err(e) if e.kind() == ErrorKind::Numeric => {
                state.step += 1;
                log::warn!("step {step}: {e}; update skipped");
                (f64::NAN, f64::NAN, true)
            }
            Err(e) => return Err(e),
        };
        if skipped {
            skipped_steps += 1;
            consecutive += 1;
            if consecutive > MAX_CONSECUTIVE_SKIPS {
                return Err(Error::Training(format!(
                    "{consecutive} consecutive steps without a finite loss and gradient (last at step {step})"
                )));
            }
        } else {
            consecutive = 0;
        }
        if !warned_flat && loss >= 2.0 - 1e-12 && grad_norm == 0.0 {
            log::warn!(
                "step {step}: loss is at its maximum with a zero gradient; every forecast has the wrong sign and sMAPE gives no signal"
            );
            warned_flat = true;
        }
        let entry = LogEntry {
            step,
            loss,
            grad_norm,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            skipped,
        };
        log::debug!("step {step} loss {loss:.6} grad_norm {grad_norm:.4}");
        log.push(entry);
        if step % CHECKPOINT_EVERY == 0 {
            if kept.len() == CHECKPOINTS_AVERAGED {
                kept.pop_front();
            }
            kept.push_back(Checkpoint {
                step,
                params: params.clone(),
            });
            checkpoint_steps.push(step);
        }
        observer(step, &params)?;
    }
    let final_params = if kept.is_empty() {
        params
    } else {
        let snaps: Vec<&GlobalParams> = kept.iter().map(|c| &c.params).collect();
        GlobalParams::average(&snaps)?
    };
    Ok(TrainOutcome {
        params: final_params,
        log,
        checkpoints: kept.into(),
        checkpoint_steps,
        skipped_steps,
    })
}
