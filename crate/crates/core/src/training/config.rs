use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSpec, Frequency};
use crate::model::{Adaptation, BackboneKind, ModelConfig, Strategy, DEFAULT_ZONEOUT};
use crate::{Error, Result};

/// Settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_steps: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    /// Context length as a multiple of the training horizon.
    pub context_mult: f64,
    pub rep_dim: usize,
    /// LSTM width; the representation dimension when unset.
    pub hidden_dim: Option<usize>,
    /// Minimum real observations in the context of a training slice.
    pub min_history: usize,
    pub seed_init: u64,
    pub seed_batch: u64,
    pub strategy: Strategy,
    pub backbone: BackboneKind,
    pub adaptation: Adaptation,
    pub zoneout: f64,
    pub log_scale_covariate: bool,
    pub normalize_age: bool,
    pub warmup_through_padding: bool,
    /// Fixed ridge penalty used at prediction under ADA.
    pub ada_gamma: f64,
    pub ada_anchor: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_steps: 25_000,
            minibatch_size: 32,
            learning_rate: 1e-3,
            context_mult: 2.0,
            rep_dim: 30,
            hidden_dim: None,
            min_history: 24,
            seed_init: 0,
            seed_batch: 1,
            strategy: Strategy::Iterated,
            backbone: BackboneKind::Rnn,
            adaptation: Adaptation::Meta,
            zoneout: DEFAULT_ZONEOUT,
            log_scale_covariate: true,
            normalize_age: false,
            warmup_through_padding: true,
            ada_gamma: 1.0,
            ada_anchor: false,
        }
    }
}

impl TrainConfig {
    /// `round(context_mult · horizon)`, at least 1.
    pub fn context_len(&self, horizon: usize) -> usize {
        ((self.context_mult * horizon as f64).round() as usize).max(1)
    }

    /// Minimum history actually enforced: it cannot exceed the context.
    pub fn effective_min_history(&self, horizon: usize) -> usize {
        self.min_history.min(self.context_len(horizon))
    }

    /// Structural checks that apply to every run.
    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive and finite"));
        }
        if !(self.context_mult > 0.0 && self.context_mult.is_finite()) {
            return Err(Error::config("context_mult", "must be positive and finite"));
        }
        if self.rep_dim == 0 {
            return Err(Error::config("rep_dim", "must be at least 1"));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::config("hidden_dim", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.zoneout) {
            return Err(Error::config("zoneout", "must lie in [0, 1]"));
        }
        if !(self.ada_gamma > 0.0 && self.ada_gamma.is_finite()) {
            return Err(Error::config("ada_gamma", "must be positive and finite"));
        }
        Ok(())
    }

    /// Architecture for a dataset with frequency `freq` and horizon `horizon`.
    pub fn model_config(&self, freq: Frequency, horizon: usize) -> Result<ModelConfig> {
        self.validate()?;
        if horizon == 0 {
            return Err(Error::config("prediction_length", "must be at least 1"));
        }
        let mut features = FeatureSpec::for_frequency(freq);
        features.log_scale = self.log_scale_covariate;
        features.normalize_age = self.normalize_age;
        let cfg = ModelConfig {
            backbone: self.backbone,
            adaptation: self.adaptation,
            freq,
            features,
            hidden_dim: self.hidden_dim.unwrap_or(self.rep_dim),
            rep_dim: self.rep_dim,
            zoneout: self.zoneout,
            context_len: self.context_len(horizon),
            horizon,
            warmup_through_padding: self.warmup_through_padding,
            ada_gamma: self.ada_gamma,
            ada_anchor: self.ada_anchor,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Ranges sampled by the random search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub num_steps: Vec<usize>,
    pub minibatch_size: Vec<usize>,
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub context_mult: (f64, f64),
    pub rep_dim: (usize, usize),
    pub min_history: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            num_steps: vec![25_000, 50_000],
            minibatch_size: vec![32, 64, 128],
            learning_rate: (1e-5, 2e-3),
            context_mult: (0.3, 5.0),
            rep_dim: (20, 50),
            min_history: (24, 100),
        }
    }
}

impl SearchSpace {
    /// Checks that `cfg` lies inside the space.
    pub fn check(&self, cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        if !self.num_steps.contains(&cfg.num_steps) {
            return Err(Error::config(
                "num_steps",
                format!("{} not in {:?}", cfg.num_steps, self.num_steps),
            ));
        }
        if !self.minibatch_size.contains(&cfg.minibatch_size) {
            return Err(Error::config(
                "minibatch_size",
                format!("{} not in {:?}", cfg.minibatch_size, self.minibatch_size),
            ));
        }
        let within = |field: &str, v: f64, (lo, hi): (f64, f64)| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("{v} outside [{lo}, {hi}]")))
            }
        };
        within("learning_rate", cfg.learning_rate, self.learning_rate)?;
        within("context_mult", cfg.context_mult, self.context_mult)?;
        let (lo, hi) = self.rep_dim;
        within("rep_dim", cfg.rep_dim as f64, (lo as f64, hi as f64))?;
        let (lo, hi) = self.min_history;
        within("min_history", cfg.min_history as f64, (lo as f64, hi as f64))?;
        Ok(())
    }

    /// Draws the sampled fields, keeping everything else from `base`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, base: &TrainConfig, rng: &mut R) -> Result<TrainConfig> {
        use rand::seq::SliceRandom;
        let pick = |v: &[usize], rng: &mut R, field: &str| {
            v.choose(rng)
                .copied()
                .ok_or_else(|| Error::config(field, "no values to choose from"))
        };
        let mut cfg = base.clone();
        cfg.num_steps = pick(&self.num_steps, rng, "num_steps")?;
        cfg.minibatch_size = pick(&self.minibatch_size, rng, "minibatch_size")?;
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::config("learning_rate", "search range must be positive and ordered"));
        }
        cfg.learning_rate = rng.gen_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi);
        cfg.context_mult = rng.gen_range(self.context_mult.0..=self.context_mult.1);
        cfg.rep_dim = rng.gen_range(self.rep_dim.0..=self.rep_dim.1);
        cfg.min_history = rng.gen_range(self.min_history.0..=self.min_history.1);
        cfg.seed_init = rng.gen();
        cfg.seed_batch = rng.gen();
        Ok(cfg)
    }
}
