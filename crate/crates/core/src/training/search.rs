use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SearchSpace, TrainConfig};
use super::trainer::train;
use crate::dataset::{split_train_test, Dataset, TimeSeries};
use crate::evaluation::{forecast_all, holdout_targets, smape_metric, Window};
use crate::model::{ForwardOptions, GlobalParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Rejected(String),
    Failed(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub config: TrainConfig,
    /// sMAPE on the held-out tails of the selection subset.
    pub score: Option<f64>,
    #[serde(flatten)]
    pub status: TrialStatus,
    #[serde(skip)]
    pub params: Option<GlobalParams>,
}

/// Everything shared by the trials of one search.
#[derive(Clone, Debug)]
pub struct SearchPlan {
    /// Source series with their last horizon removed.
    pub train: Dataset,
    /// Full series whose last horizon scores each trial.
    pub selection: Vec<TimeSeries>,
    pub configs: Vec<TrainConfig>,
}

/// Splits the data, draws the selection subset once and samples every
/// trial's configuration.
pub fn plan_search<R: Rng + ?Sized>(
    dataset: &Dataset,
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    selection_size: usize,
    rng: &mut R,
) -> Result<SearchPlan> {
    if n_trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let configs = (0..n_trials)
        .map(|_| space.sample(base, rng))
        .collect::<Result<Vec<_>>>()?;
    plan_with_configs(dataset, configs, selection_size, rng)
}

/// Like [`plan_search`] with caller-provided configurations.
pub fn plan_with_configs<R: Rng + ?Sized>(
    dataset: &Dataset,
    configs: Vec<TrainConfig>,
    selection_size: usize,
    rng: &mut R,
) -> Result<SearchPlan> {
    let horizon = dataset.meta.prediction_length;
    let (train, test) = split_train_test(&dataset.series, horizon)?;
    if test.is_empty() || selection_size == 0 {
        return Err(Error::Data("selection subset would be empty".into()));
    }
    let mut idx = sample(rng, test.len(), selection_size.min(test.len())).into_vec();
    idx.sort_unstable();
    Ok(SearchPlan {
        train: Dataset {
            meta: dataset.meta,
            series: train,
        },
        selection: idx.into_iter().map(|i| test[i].clone()).collect(),
        configs,
    })
}

/// sMAPE of `params` on the last horizon of each selection series.
pub fn selection_score(params: &GlobalParams, selection: &[TimeSeries], horizon: usize) -> Result<f64> {
    let opts = ForwardOptions::prediction(params);
    let forecasts = forecast_all(params, selection, horizon, Window::HoldOut, &opts, "trial", "selection")?;
    smape_metric(&forecasts, &holdout_targets(selection, horizon)?)
}

/// Trains and scores one trial; failures are recorded, not propagated.
pub fn run_trial(plan: &SearchPlan, trial: usize, space: &SearchSpace) -> TrialResult {
    let config = plan.configs[trial].clone();
    let mut result = TrialResult {
        trial,
        config,
        score: None,
        status: TrialStatus::Ok,
        params: None,
    };
    if let Err(e) = space.check(&result.config) {
        log::warn!("trial {trial} rejected: {e}");
        result.status = TrialStatus::Rejected(e.to_string());
        return result;
    }
    let horizon = plan.train.meta.prediction_length;
    let outcome = train(&plan.train, &result.config).and_then(|o| {
        let score = selection_score(&o.params, &plan.selection, horizon)?;
        Ok((o.params, score))
    });
    match outcome {
        Ok((params, score)) => {
            log::info!("trial {trial}: sMAPE {score:.4}");
            result.score = Some(score);
            result.params = Some(params);
        }
        Err(e) => {
            log::warn!("trial {trial} failed: {e}");
            result.status = TrialStatus::Failed(e.to_string());
        }
    }
    result
}

/// Scored trials by ascending score, then the failed and rejected ones.
pub fn rank(mut results: Vec<TrialResult>) -> Vec<TrialResult> {
    results.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.trial.cmp(&b.trial)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.trial.cmp(&b.trial),
    });
    results
}

/// Runs `n_trials` sampled configurations and ranks them.
pub fn random_search<R: Rng + ?Sized>(
    dataset: &Dataset,
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    selection_size: usize,
    rng: &mut R,
) -> Result<Vec<TrialResult>> {
    let plan = plan_search(dataset, base, space, n_trials, selection_size, rng)?;
    Ok(run_plan(&plan, space))
}

pub fn run_plan(plan: &SearchPlan, space: &SearchSpace) -> Vec<TrialResult> {
    rank((0..plan.configs.len()).map(|i| run_trial(plan, i, space)).collect())
}
