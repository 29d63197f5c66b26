use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ridgecast::autodiff::{grad_check_with_fault, AdjointFault, Tensor};
use ridgecast::dataset::{Dataset, ForecastTask, Frequency};
use ridgecast::evaluation::{
    ensemble_median, forecast_all, forecasts_from_jsonl, forecasts_to_jsonl, holdout_targets, metric,
    report, report_to_jsonl, Window,
};
use ridgecast::model::{ForwardOptions, GlobalParams, ModelVars};
use ridgecast::synthetic::Generator;
use ridgecast::training::{
    ablation_grid, batch_loss_on_tape, init_params, plan_search, rank, run_trial, train_with_observer,
    BatchTask, SearchSpace, TrainConfig, TrialResult, TrialStatus,
};
use ridgecast::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{AblateArgs, EvaluateArgs, ForecastArgs, GradcheckArgs, SearchArgs, TrainArgs};
use crate::manifest::{sha256_hex, Manifest};
use crate::settings::RunConfig;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_MAX_DIM: usize = 8;
pub const GRADCHECK_MAX_CONTEXT: usize = 40;

/// The gradient check ran but exceeded its tolerance.
#[derive(Debug, thiserror::Error)]
#[error("gradient check failed: max relative error {0:.3e} exceeds {GRADCHECK_TOLERANCE:e}")]
pub struct GradcheckFailed(pub f64);

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs `body` between the opening and closing manifest writes.
fn with_manifest<F>(run: &RunConfig, body: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut Manifest) -> anyhow::Result<()>,
{
    let mut manifest = Manifest::begin(run)?;
    let outcome = body(&mut manifest);
    let error = outcome.as_ref().err().map(|e| format!("{e:#}"));
    manifest.finish(error.as_deref())?;
    outcome
}

fn load_dataset(manifest: &mut Manifest, path: &Path) -> Result<Dataset> {
    let data = Dataset::load(path)?;
    manifest.input(path)?;
    Ok(data)
}

fn check_freq(model: Frequency, target: Frequency, allow: bool) -> Result<()> {
    if model == target {
        return Ok(());
    }
    if allow {
        warn!("model frequency {model:?} differs from target frequency {target:?}");
        return Ok(());
    }
    Err(Error::config(
        "freq",
        format!("model was trained on {model:?} data but the target is {target:?} (pass --allow-freq-mismatch to override)"),
    ))
}

fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("train", &args.common, TrainConfig::default())?;
    if args.source.is_some() {
        run.source = args.source;
    }
    run.check_ranges(&run.train)?;
    let source = run.source()?.to_path_buf();
    with_manifest(&run, |m| {
        let data = load_dataset(m, &source)?;
        info!(
            "training on {} series ({:?}, horizon {}) for {} steps",
            data.len(),
            data.meta.freq,
            data.meta.prediction_length,
            run.train.num_steps
        );
        let total = run.train.num_steps;
        let outcome = train_with_observer(&data, &run.train, |step, _| {
            if step % 1000 == 0 || step == total {
                info!("step {step}/{total}");
            }
            Ok(())
        })?;
        let model = m.artifact("model.json", outcome.params.to_json()?.as_bytes())?;
        m.artifact("train_log.jsonl", to_jsonl(&outcome.log)?.as_bytes())?;
        let averaged: Vec<usize> = outcome.checkpoints.iter().map(|c| c.step).collect();
        m.detail("checkpoints", &outcome.checkpoint_steps)?;
        m.detail("averaged_checkpoints", &averaged)?;
        m.detail("skipped_steps", outcome.skipped_steps)?;
        m.detail("gamma", outcome.params.gamma())?;
        println!("model written to {}", model.display());
        Ok(())
    })
}

pub fn forecast(args: ForecastArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("forecast", &args.common, TrainConfig::default())?;
    if args.target.is_some() {
        run.target = args.target;
    }
    let target_path = run.target()?.to_path_buf();
    with_manifest(&run, |m| {
        let params = GlobalParams::load(&args.model)?;
        m.input(&args.model)?;
        let target = load_dataset(m, &target_path)?;
        check_freq(params.config.freq, target.meta.freq, args.allow_freq_mismatch)?;
        let horizon = target.meta.prediction_length;
        let window = if args.future { Window::Future } else { Window::HoldOut };
        let opts = ForwardOptions::prediction(&params);
        let set = forecast_all(
            &params,
            &target.series,
            horizon,
            window,
            &opts,
            &stem(&args.model),
            &stem(&target_path),
        )?;
        let path = m.artifact("forecasts.jsonl", forecasts_to_jsonl(&set)?.as_bytes())?;
        m.detail("series", set.items.len())?;
        m.detail("horizon", horizon)?;
        println!("{} series x {horizon} steps written to {}", set.items.len(), path.display());
        Ok(())
    })
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("evaluate", &args.common, TrainConfig::default())?;
    if args.target.is_some() {
        run.target = args.target;
    }
    if let Some(kind) = args.metric {
        run.metric = kind;
    }
    let target_path = run.target()?.to_path_buf();
    with_manifest(&run, |m| {
        let target = load_dataset(m, &target_path)?;
        let dataset_id = stem(&target_path);
        let targets = holdout_targets(&target.series, target.meta.prediction_length)?;
        let mut models = Vec::with_capacity(args.forecasts.len());
        for path in &args.forecasts {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            m.input(path)?;
            models.push(forecasts_from_jsonl(&text, &path.display().to_string(), &dataset_id)?);
        }
        let rep = report(&models, &targets, &dataset_id, run.metric)?;
        m.artifact("metrics.jsonl", report_to_jsonl(&rep)?.as_bytes())?;
        for s in &rep.models {
            println!("{}\t{}\t{:.6}", rep.metric, s.model, s.value);
        }
        if rep.models.len() > 1 {
            println!("{}\tmean\t{:.6} +- {:.6}", rep.metric, rep.mean, rep.ci);
        }
        if let Some(e) = rep.ensemble {
            println!("{}\tmedian-ensemble\t{:.6}", rep.metric, e);
        }
        m.detail("report", &rep)?;
        Ok(())
    })
}

#[derive(Serialize, Deserialize)]
struct StoredTrial {
    key: String,
    #[serde(flatten)]
    result: TrialResult,
}

#[derive(Serialize)]
struct TopEntry<'a> {
    rank: usize,
    trial: usize,
    key: &'a str,
    score: f64,
    model: String,
}

pub fn search(args: SearchArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("search", &args.common, TrainConfig::default())?;
    if args.source.is_some() {
        run.source = args.source;
    }
    if args.target.is_some() {
        run.target = args.target;
    }
    run.trials = args.trials.unwrap_or(run.trials);
    run.topk = args.topk.unwrap_or(run.topk);
    run.selection_size = args.selection_size.unwrap_or(run.selection_size);
    if run.search != SearchSpace::default() && !run.unchecked {
        return Err(Error::config("search", "a custom search space needs --unchecked").into());
    }
    if run.topk == 0 {
        return Err(Error::config("topk", "must be at least 1").into());
    }
    let source = run.source()?.to_path_buf();
    let target_path = run.target.clone();
    with_manifest(&run, |m| {
        let data = load_dataset(m, &source)?;
        let source_hash = sha256_hex(&fs::read(&source).map_err(|e| Error::io(&source, e))?);
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed.unwrap_or(0));
        let plan = plan_search(&data, &run.train, &run.search, run.trials, run.selection_size, &mut rng)?;
        let selection: Vec<&str> = plan.selection.iter().map(|s| s.item_id.as_str()).collect();

        let mut results = Vec::with_capacity(run.trials);
        let mut resumed = 0usize;
        for (i, config) in plan.configs.iter().enumerate() {
            let fingerprint = serde_json::to_vec(&(i, config, &source_hash, &selection))?;
            let key = sha256_hex(&fingerprint)[..16].to_string();
            let result_name = format!("trials/{key}.json");
            let model_name = format!("trials/{key}.model.json");
            let result_path = m.out_dir().join(&result_name);
            if result_path.exists() {
                let text = fs::read_to_string(&result_path).map_err(|e| Error::io(&result_path, e))?;
                let mut stored: StoredTrial = serde_json::from_str(&text)?;
                if stored.result.status == TrialStatus::Ok {
                    stored.result.params = Some(GlobalParams::load(&m.out_dir().join(&model_name))?);
                }
                info!("trial {i} already done, skipping");
                resumed += 1;
                results.push((key, stored.result));
                continue;
            }
            let result = run_trial(&plan, i, &run.search);
            if let Some(p) = &result.params {
                m.artifact(&model_name, p.to_json()?.as_bytes())?;
            }
            let stored = StoredTrial { key: key.clone(), result };
            m.artifact(&result_name, (serde_json::to_string(&stored)? + "\n").as_bytes())?;
            results.push((key, stored.result));
            m.detail("trials_done", results.len())?;
            m.checkpoint()?;
        }
        m.detail("trials_resumed", resumed)?;

        let keys: std::collections::HashMap<usize, String> =
            results.iter().map(|(k, r)| (r.trial, k.clone())).collect();
        let ranked = rank(results.into_iter().map(|(_, r)| r).collect());
        let rows: Vec<StoredTrial> = ranked
            .iter()
            .map(|r| StoredTrial { key: keys[&r.trial].clone(), result: r.clone() })
            .collect();
        m.artifact("ranking.jsonl", to_jsonl(&rows)?.as_bytes())?;

        let scored: Vec<&TrialResult> = ranked.iter().filter(|r| r.score.is_some()).collect();
        if scored.is_empty() {
            return Err(Error::Training("no trial produced a model".into()).into());
        }
        let k = run.topk.min(scored.len());
        if k < run.topk {
            warn!("top-k clipped from {} to {k}: only {k} trials succeeded", run.topk);
            m.detail("topk_clipped", k)?;
        }
        let mut top = Vec::with_capacity(k);
        for (rank, r) in scored[..k].iter().enumerate() {
            let name = format!("top/{:02}.model.json", rank + 1);
            let params = r.params.as_ref().context("scored trial without parameters")?;
            m.artifact(&name, params.to_json()?.as_bytes())?;
            top.push(TopEntry {
                rank: rank + 1,
                trial: r.trial,
                key: &keys[&r.trial],
                score: r.score.unwrap_or(f64::NAN),
                model: name,
            });
            println!("#{} trial {} sMAPE {:.4}", rank + 1, r.trial, r.score.unwrap_or(f64::NAN));
        }
        m.artifact("top_k.json", (serde_json::to_string_pretty(&top)? + "\n").as_bytes())?;

        if let Some(tp) = &target_path {
            let target = load_dataset(m, tp)?;
            let horizon = target.meta.prediction_length;
            let mut sets = Vec::with_capacity(k);
            for r in &scored[..k] {
                let params = r.params.as_ref().context("scored trial without parameters")?;
                check_freq(params.config.freq, target.meta.freq, false)?;
                let opts = ForwardOptions::prediction(params);
                sets.push(forecast_all(
                    params,
                    &target.series,
                    horizon,
                    Window::HoldOut,
                    &opts,
                    &format!("trial{}", r.trial),
                    &stem(tp),
                )?);
            }
            let ensemble = ensemble_median(&sets)?;
            m.artifact("ensemble_forecasts.jsonl", forecasts_to_jsonl(&ensemble)?.as_bytes())?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct AblationRow {
    label: String,
    metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn ablate(args: AblateArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("ablate", &args.common, TrainConfig::default())?;
    if args.source.is_some() {
        run.source = args.source;
    }
    if args.target.is_some() {
        run.target = args.target;
    }
    if let Some(kind) = args.metric {
        run.metric = kind;
    }
    run.check_ranges(&run.train)?;
    let source = run.source()?.to_path_buf();
    let target_path = run.target()?.to_path_buf();
    with_manifest(&run, |m| {
        let data = load_dataset(m, &source)?;
        let target = load_dataset(m, &target_path)?;
        check_freq(data.meta.freq, target.meta.freq, false)?;
        let horizon = target.meta.prediction_length;
        let targets = holdout_targets(&target.series, horizon)?;
        let mut rows = Vec::new();
        for (label, cfg) in ablation_grid(&run.train) {
            info!("ablation {label}");
            let scored = train_with_observer(&data, &cfg, |_, _| Ok(())).and_then(|o| {
                let opts = ForwardOptions::prediction(&o.params);
                let set = forecast_all(&o.params, &target.series, horizon, Window::HoldOut, &opts, &label, &stem(&target_path))?;
                let value = metric(run.metric, &set, &targets)?;
                Ok((o.params, value))
            });
            let row = match scored {
                Ok((params, value)) => {
                    m.artifact(&format!("models/{label}.model.json"), params.to_json()?.as_bytes())?;
                    println!("{label:<14}\t{value:.4}");
                    AblationRow { label, metric: run.metric.to_string(), value: Some(value), error: None }
                }
                Err(e) => {
                    warn!("{label}: {e}");
                    println!("{label:<14}\tfailed: {e}");
                    AblationRow { label, metric: run.metric.to_string(), value: None, error: Some(e.to_string()) }
                }
            };
            rows.push(row);
            m.artifact("ablation.jsonl", to_jsonl(&rows)?.as_bytes())?;
            m.checkpoint()?;
        }
        Ok(())
    })
}

/// Small model used by the gradient check unless overridden.
pub fn gradcheck_defaults() -> TrainConfig {
    TrainConfig {
        rep_dim: 4,
        hidden_dim: Some(4),
        context_mult: 4.0,
        min_history: 24,
        normalize_age: true,
        ..TrainConfig::default()
    }
}

#[derive(Serialize)]
struct GradcheckSummary {
    max_rel_error: f64,
    tolerance: f64,
    coordinates: usize,
    worst: Option<(String, usize)>,
    passed: bool,
}

pub fn gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    let mut run = RunConfig::resolve("gradcheck", &args.common, gradcheck_defaults())?;
    if args.source.is_some() {
        run.source = args.source;
    }
    with_manifest(&run, |m| {
        let data = match &run.source {
            Some(p) => {
                let mut d = load_dataset(m, p)?;
                let h = d.meta.prediction_length;
                d.series.retain(|s| s.len() > h);
                d.series.truncate(2);
                d
            }
            None => Generator::quarterly_source().dataset(2, 6, "toy", run.seed.unwrap_or(1)),
        };
        if data.series.is_empty() {
            return Err(Error::Data("no series longer than the horizon".into()).into());
        }
        let params = init_params(&data, &run.train)?;
        let c = &params.config;
        if c.rep_dim > GRADCHECK_MAX_DIM || c.hidden_dim > GRADCHECK_MAX_DIM {
            return Err(Error::config("rep_dim", format!("gradient check allows d <= {GRADCHECK_MAX_DIM}")).into());
        }
        if c.context_len > GRADCHECK_MAX_CONTEXT {
            return Err(Error::config(
                "context_mult",
                format!("context length {} exceeds {GRADCHECK_MAX_CONTEXT}", c.context_len),
            )
            .into());
        }
        let horizon = data.meta.prediction_length;
        let features = Arc::new(c.features.clone());
        let batch = data
            .series
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(BatchTask {
                    task: ForecastTask::new(s, s.len() - horizon, c.context_len, horizon, features.clone(), true)?,
                    seed: i as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let opts = ForwardOptions::training(run.train.adaptation, run.train.strategy);
        let tensors: Vec<Tensor> = params.tensors().cloned().collect();
        let fault = args.inject_fault.then_some(AdjointFault::DropSolveMatrixAdjoint);
        let report = grad_check_with_fault(
            |tape, vars| {
                let mv = ModelVars::from_vars(&params, vars.to_vec())?;
                batch_loss_on_tape(tape, &mv, &params, &batch, &opts)
            },
            &tensors,
            args.eps,
            fault,
        )?;
        let passed = report.max_rel_error < GRADCHECK_TOLERANCE;
        let summary = GradcheckSummary {
            max_rel_error: report.max_rel_error,
            tolerance: GRADCHECK_TOLERANCE,
            coordinates: report.coordinates,
            worst: report.worst.map(|(t, i)| (params.params[t].name.clone(), i)),
            passed,
        };
        m.artifact("gradcheck.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
        m.detail("gradcheck", &summary)?;
        println!(
            "max relative error {:.3e} over {} coordinates: {}",
            report.max_rel_error,
            report.coordinates,
            if passed { "PASS" } else { "FAIL" }
        );
        if passed {
            Ok(())
        } else {
            Err(GradcheckFailed(report.max_rel_error).into())
        }
    })
}
