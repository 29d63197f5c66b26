//! The forward pass: representation, head and iterated one-step forecasts.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::{step, LstmState, Mode, ModelVars};
use super::local::fit_local_on_tape;
use super::params::{Adaptation, BackboneKind, GlobalParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::{ForecastTask, LagSource};
use crate::{Error, Result};

/// What fills horizon lags while producing forecasts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Previous forecasts (ITF).
    Iterated,
    /// True horizon observations; training only.
    TeacherForced,
}

/// Source of the final linear layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeadMode {
    /// Ridge head fit on the context. `gamma: None` uses the learned penalty;
    /// `anchored` shrinks towards the global head instead of zero.
    Local { gamma: Option<f64>, anchored: bool },
    /// The trained global head.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub mode: Mode,
    pub strategy: Strategy,
    pub head: HeadMode,
    /// Treat the ridge head as a constant (drops the indirect gradient path).
    pub stop_gradient_local: bool,
}

impl ForwardOptions {
    pub fn new(mode: Mode, strategy: Strategy, head: HeadMode) -> Self {
        Self {
            mode,
            strategy,
            head,
            stop_gradient_local: false,
        }
    }

    /// Head used while training under an adaptation scheme.
    pub fn training(adaptation: Adaptation, strategy: Strategy) -> Self {
        let head = match adaptation {
            Adaptation::Meta => HeadMode::Local {
                gamma: None,
                anchored: false,
            },
            Adaptation::GlobalHead | Adaptation::Ada => HeadMode::Global,
        };
        Self::new(Mode::Train, strategy, head)
    }

    /// Head used at prediction time for a trained model.
    pub fn prediction(params: &GlobalParams) -> Self {
        let c = &params.config;
        let head = match c.adaptation {
            Adaptation::Meta => HeadMode::Local {
                gamma: None,
                anchored: false,
            },
            Adaptation::GlobalHead => HeadMode::Global,
            Adaptation::Ada => HeadMode::Local {
                gamma: Some(c.ada_gamma),
                anchored: c.ada_anchor,
            },
        };
        Self::new(Mode::Eval, Strategy::Iterated, head)
    }
}

/// Everything the forward pass leaves on the tape for one task.
#[derive(Clone, Debug)]
pub struct TaskForward {
    /// Scaled, unclamped one-step forecasts for the horizon.
    pub forecasts: Vec<Var>,
    /// `h_t` per position; `None` for padding skipped by the recurrence.
    pub representation: Vec<Option<Var>>,
    /// The head applied in the horizon (`d x 1`).
    pub head: Var,
    /// Ridge head, when one was fit.
    pub local_weights: Option<Var>,
}

enum Feedback<'a> {
    Forecasts(&'a [Var]),
    Targets(&'a [f64]),
}

/// Builds `x_t` on the tape, merging runs of constant slots into one node.
fn covariate_input(
    tape: &mut Tape,
    task: &ForecastTask,
    t: usize,
    feedback: &Feedback<'_>,
) -> Result<Var> {
    let mut parts: Vec<Var> = Vec::new();
    let mut buf: Vec<f64> = Vec::with_capacity(task.features.dim());
    for &lag in &task.features.lags {
        match task.lag_source(t, lag) {
            LagSource::Padding => buf.push(0.0),
            LagSource::Observed(v) => buf.push(v),
            LagSource::Horizon(k) => match feedback {
                Feedback::Targets(target) => buf.push(target[k] / task.scale),
                Feedback::Forecasts(prev) => {
                    let f = *prev.get(k).ok_or_else(|| {
                        Error::Data(format!(
                            "lag {lag} at position {t} needs forecast {} before it exists",
                            k + 1
                        ))
                    })?;
                    if !buf.is_empty() {
                        parts.push(tape.constant(Tensor::column(std::mem::take(&mut buf)))?);
                    }
                    parts.push(f);
                }
            },
        }
    }
    buf.push(task.age(t));
    buf.extend(task.log_scale());
    parts.push(tape.constant(Tensor::column(buf))?);
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        Ok(tape.concat_rows(&parts)?)
    }
}

/// Runs the model over one task, recording every operation on `tape`.
pub fn forward_task(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &GlobalParams,
    task: &ForecastTask,
    opts: &ForwardOptions,
    rng: &mut dyn RngCore,
) -> Result<TaskForward> {
    let cfg = &params.config;
    if *task.features != cfg.features {
        return Err(Error::Data(format!(
            "task {} was built for a different covariate layout",
            task.item_id
        )));
    }
    let targets = match opts.strategy {
        Strategy::TeacherForced => Some(task.target.as_deref().ok_or_else(|| {
            Error::Data(format!(
                "teacher forcing needs horizon observations for {}",
                task.item_id
            ))
        })?),
        Strategy::Iterated => None,
    };

    let mut state = match cfg.backbone {
        BackboneKind::Rnn => LstmState::zeros(tape, 2, cfg.hidden_dim)?,
        _ => LstmState::default(),
    };
    let mut representation = Vec::with_capacity(task.len());
    let mut context_rows = Vec::with_capacity(task.context_len);
    let none = Feedback::Forecasts(&[]);
    for t in 1..=task.context_len {
        let pad = task.is_padding(t);
        if pad && !cfg.warmup_through_padding {
            representation.push(None);
            continue;
        }
        let x = covariate_input(tape, task, t, &none)?;
        let h = step(tape, &vars.backbone, x, &mut state, cfg.zoneout, opts.mode, rng)?;
        representation.push(Some(h));
        if !pad {
            context_rows.push(h);
        }
    }

    let (head, local_weights) = match opts.head {
        HeadMode::Global => (vars.head, None),
        HeadMode::Local { gamma, anchored } => {
            let h = tape.stack_rows(&context_rows)?;
            let z = tape.constant(Tensor::column(task.scaled_context()))?;
            let g = match gamma {
                Some(g) if g > 0.0 => tape.constant(Tensor::scalar(g))?,
                Some(g) => return Err(Error::config("gamma", format!("{g} is not positive"))),
                None => tape.softplus(vars.gamma_raw)?,
            };
            let anchor = anchored.then_some(vars.head);
            let mut w = fit_local_on_tape(tape, h, z, g, anchor)?;
            if opts.stop_gradient_local {
                w = tape.detach(w)?;
            }
            (w, Some(w))
        }
    };
    let head_row = tape.transpose(head)?;

    let mut forecasts: Vec<Var> = Vec::with_capacity(task.horizon);
    for k in 0..task.horizon {
        let t = task.context_len + 1 + k;
        let feedback = match targets {
            Some(tg) => Feedback::Targets(tg),
            None => Feedback::Forecasts(&forecasts),
        };
        let x = covariate_input(tape, task, t, &feedback)?;
        let h = step(tape, &vars.backbone, x, &mut state, cfg.zoneout, opts.mode, rng)?;
        representation.push(Some(h));
        forecasts.push(tape.matmul(head_row, h)?);
    }
    Ok(TaskForward {
        forecasts,
        representation,
        head,
        local_weights,
    })
}

/// Descaled forecasts with negative values set to zero.
fn emit(tape: &Tape, out: &TaskForward, scale: f64) -> Vec<f64> {
    out.forecasts
        .iter()
        .map(|&f| (tape.value(f).item() * scale).max(0.0))
        .collect()
}

/// Forecasts `task` with explicit options.
pub fn forecast_with(
    task: &ForecastTask,
    params: &GlobalParams,
    opts: &ForwardOptions,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let out = forward_task(&mut tape, &vars, params, task, opts, rng)?;
    Ok(emit(&tape, &out, task.scale))
}

/// Closed-form adaptation with the learned penalty.
pub fn forecast(
    task: &ForecastTask,
    params: &GlobalParams,
    mode: Mode,
    strategy: Strategy,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let head = HeadMode::Local {
        gamma: None,
        anchored: false,
    };
    forecast_with(task, params, &ForwardOptions::new(mode, strategy, head), rng)
}

/// Forecasts with the trained global head in place of the ridge fit.
pub fn forecast_global_head(
    task: &ForecastTask,
    params: &GlobalParams,
    strategy: Strategy,
) -> Result<Vec<f64>> {
    let opts = ForwardOptions::new(Mode::Eval, strategy, HeadMode::Global);
    forecast_with(task, params, &opts, &mut ChaCha8Rng::seed_from_u64(0))
}

/// Replaces the global head by a ridge fit with fixed penalty at prediction
/// time only, optionally anchored at the global head.
pub fn adapt_at_prediction_only(
    task: &ForecastTask,
    params: &GlobalParams,
    gamma_fixed: f64,
    anchored: bool,
) -> Result<Vec<f64>> {
    let head = HeadMode::Local {
        gamma: Some(gamma_fixed),
        anchored,
    };
    let opts = ForwardOptions::new(Mode::Eval, Strategy::Iterated, head);
    forecast_with(task, params, &opts, &mut ChaCha8Rng::seed_from_u64(0))
}

/// Eval-mode iterated forecasts using the head the model was trained for.
pub fn predict(task: &ForecastTask, params: &GlobalParams) -> Result<Vec<f64>> {
    let opts = ForwardOptions::prediction(params);
    forecast_with(task, params, &opts, &mut ChaCha8Rng::seed_from_u64(0))
}

/// `(t₀ + H) x d` matrix of representations from an eval-mode iterated pass.
///
/// Rows of padding positions skipped by the recurrence are zero.
pub fn represent(task: &ForecastTask, params: &GlobalParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false)?;
    let opts = ForwardOptions::prediction(params);
    let out = forward_task(
        &mut tape,
        &vars,
        params,
        task,
        &opts,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let d = params.config.rep_dim;
    let mut data = Vec::with_capacity(out.representation.len() * d);
    for row in &out.representation {
        match row {
            Some(v) => data.extend_from_slice(tape.value(*v).data()),
            None => data.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    Ok(Tensor::new(out.representation.len(), d, data)?)
}
