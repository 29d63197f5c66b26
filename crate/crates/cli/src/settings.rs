use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridgecast::evaluation::MetricKind;
use ridgecast::training::{SearchSpace, TrainConfig};
use ridgecast::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Common, TrainFlags};

const RUN_KEYS: &[&str] = &[
    "source",
    "target",
    "out",
    "seed",
    "unchecked",
    "metric",
    "trials",
    "topk",
    "selection_size",
    "search",
];

/// Run-level keys of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileRun {
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    unchecked: bool,
    metric: Option<MetricKind>,
    trials: Option<usize>,
    topk: Option<usize>,
    selection_size: Option<usize>,
    search: Option<SearchSpace>,
}

/// The effective settings of one command after merging file and flags.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub unchecked: bool,
    pub metric: MetricKind,
    pub trials: usize,
    pub topk: usize,
    pub selection_size: usize,
    pub search: SearchSpace,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn defaults(command: &str) -> Self {
        Self {
            command: command.to_string(),
            source: None,
            target: None,
            out: PathBuf::from("ridgecast-out"),
            seed: None,
            unchecked: false,
            metric: MetricKind::Smape,
            trials: 200,
            topk: 10,
            selection_size: 1000,
            search: SearchSpace::default(),
            train: TrainConfig::default(),
        }
    }

    /// Applies the config file, then the master seed, then explicit flags.
    pub fn resolve(command: &str, common: &Common, base: TrainConfig) -> Result<Self> {
        let mut run = Self::defaults(command);
        run.train = base;
        if let Some(path) = &common.config {
            run.apply_file(path)?;
        }
        if let Some(seed) = common.seed {
            run.seed = Some(seed);
        }
        if let Some(seed) = run.seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run.train.seed_init = rng.next_u64();
            run.train.seed_batch = rng.next_u64();
        }
        if let Some(out) = &common.out {
            run.out = out.clone();
        }
        run.unchecked |= common.unchecked;
        apply_flags(&mut run.train, &common.train);
        run.train.validate()?;
        Ok(run)
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(path.display().to_string(), e.message().to_string()))?;
        let mut run_table = toml::Table::new();
        for key in RUN_KEYS {
            if let Some(v) = table.remove(*key) {
                run_table.insert(key.to_string(), v);
            }
        }
        let file_err = |e: toml::de::Error| Error::config(path.display().to_string(), e.message().to_string());
        let run: FileRun = toml::Value::Table(run_table).try_into().map_err(file_err)?;
        let mut train = toml::Table::try_from(&self.train).map_err(|e| Error::config("train", e.to_string()))?;
        train.extend(table);
        self.train = toml::Value::Table(train).try_into().map_err(file_err)?;

        let dir = path.parent().unwrap_or(Path::new(""));
        let rel = |p: PathBuf| if p.is_relative() { dir.join(p) } else { p };
        self.source = run.source.map(rel).or(self.source.take());
        self.target = run.target.map(rel).or(self.target.take());
        if let Some(out) = run.out {
            self.out = rel(out);
        }
        self.seed = run.seed.or(self.seed);
        self.unchecked |= run.unchecked;
        self.metric = run.metric.unwrap_or(self.metric);
        self.trials = run.trials.unwrap_or(self.trials);
        self.topk = run.topk.unwrap_or(self.topk);
        self.selection_size = run.selection_size.unwrap_or(self.selection_size);
        if let Some(space) = run.search {
            self.search = space;
        }
        Ok(())
    }

    pub fn source(&self) -> Result<&Path> {
        self.source
            .as_deref()
            .ok_or_else(|| Error::config("source", "no source dataset given (--source or `source` key)"))
    }

    pub fn target(&self) -> Result<&Path> {
        self.target
            .as_deref()
            .ok_or_else(|| Error::config("target", "no target dataset given (--target or `target` key)"))
    }

    /// Rejects hyperparameters outside the searched ranges unless unchecked.
    pub fn check_ranges(&self, cfg: &TrainConfig) -> Result<()> {
        if self.unchecked {
            return Ok(());
        }
        SearchSpace::default().check(cfg).map_err(|e| match e {
            Error::Config { field, reason } => {
                Error::config(field, format!("{reason} (pass --unchecked to allow)"))
            }
            other => other,
        })
    }
}

fn apply_flags(cfg: &mut TrainConfig, f: &TrainFlags) {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = f.$field { cfg.$field = v; })*
        };
    }
    set!(num_steps, minibatch_size, learning_rate, context_mult, rep_dim, min_history, seed_init, seed_batch, strategy, backbone, adaptation, zoneout, ada_gamma);
    if let Some(h) = f.hidden_dim {
        cfg.hidden_dim = Some(h);
    }
    if f.no_log_scale_covariate {
        cfg.log_scale_covariate = false;
    }
    if f.normalize_age {
        cfg.normalize_age = true;
    }
    if f.no_warmup_through_padding {
        cfg.warmup_through_padding = false;
    }
    if f.ada_anchor {
        cfg.ada_anchor = true;
    }
}
