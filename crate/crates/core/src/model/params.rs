use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataset::{FeatureSpec, Frequency};
use crate::{Error, Result};

/// `ln(e - 1)`: the raw value whose softplus is exactly 1.
pub const GAMMA_RAW_INIT: f64 = 0.541_324_854_612_918_1;

pub const DEFAULT_ZONEOUT: f64 = 0.1;

const FORMAT_TAG: &str = "ridgecast-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Rnn,
    Ff,
    Linear,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [BackboneKind::Rnn, BackboneKind::Ff, BackboneKind::Linear];

    /// Short label used in ablation names.
    pub fn label(self) -> &'static str {
        match self {
            BackboneKind::Rnn => "RNN",
            BackboneKind::Ff => "FF",
            BackboneKind::Linear => "Lin",
        }
    }
}

/// How the last linear layer is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adaptation {
    /// Closed-form ridge head fit per series, in training and prediction.
    Meta,
    /// A single trained head shared by all series.
    GlobalHead,
    /// Trained with a global head; the ridge head replaces it at prediction.
    Ada,
}

impl Adaptation {
    pub const ALL: [Adaptation; 3] = [Adaptation::Meta, Adaptation::GlobalHead, Adaptation::Ada];
}

/// Architecture and input layout of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub adaptation: Adaptation,
    pub freq: Frequency,
    pub features: FeatureSpec,
    /// LSTM width (RNN only).
    pub hidden_dim: usize,
    /// Representation dimension `d`.
    pub rep_dim: usize,
    pub zoneout: f64,
    pub context_len: usize,
    /// Horizon of the training data.
    pub horizon: usize,
    /// Run the recurrence over padded positions before the first observation.
    pub warmup_through_padding: bool,
    /// Fixed ridge penalty used by [`Adaptation::Ada`].
    pub ada_gamma: f64,
    /// Shrink the ridge head towards the trained global head under ADA.
    pub ada_anchor: bool,
}

impl ModelConfig {
    pub fn new(backbone: BackboneKind, freq: Frequency, rep_dim: usize, context_len: usize) -> Self {
        Self {
            backbone,
            adaptation: Adaptation::Meta,
            freq,
            features: FeatureSpec::for_frequency(freq),
            hidden_dim: rep_dim,
            rep_dim,
            zoneout: DEFAULT_ZONEOUT,
            context_len,
            horizon: freq.source_horizon(),
            warmup_through_padding: true,
            ada_gamma: 1.0,
            ada_anchor: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.features.dim()
    }

    /// Names and shapes of the tensors this configuration needs, in storage order.
    pub fn layout(&self) -> Vec<(&'static str, usize, usize)> {
        let p = self.input_dim();
        let d = self.rep_dim;
        let h = self.hidden_dim;
        let mut l = match self.backbone {
            BackboneKind::Rnn => vec![
                ("lstm1.w_ih", 4 * h, p),
                ("lstm1.w_hh", 4 * h, h),
                ("lstm1.bias", 4 * h, 1),
                ("lstm2.w_ih", 4 * h, h),
                ("lstm2.w_hh", 4 * h, h),
                ("lstm2.bias", 4 * h, 1),
                ("proj.weight", d, h),
                ("proj.bias", d, 1),
            ],
            BackboneKind::Ff => vec![
                ("ff1.weight", d, p),
                ("ff1.bias", d, 1),
                ("ff2.weight", d, d),
                ("ff2.bias", d, 1),
            ],
            BackboneKind::Linear => vec![("lin.weight", d, p), ("lin.bias", d, 1)],
        };
        l.push(("gamma_raw", 1, 1));
        l.push(("head", d, 1));
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.rep_dim == 0 {
            return Err(Error::config("rep_dim", "must be at least 1"));
        }
        if self.backbone == BackboneKind::Rnn && self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.zoneout) {
            return Err(Error::config("zoneout", "must lie in [0, 1]"));
        }
        if self.context_len == 0 {
            return Err(Error::config("context_len", "must be at least 1"));
        }
        if self.features.lags.is_empty() || self.features.lags.contains(&0) {
            return Err(Error::config("lags", "need at least one positive lag"));
        }
        if !(self.ada_gamma > 0.0) {
            return Err(Error::config("ada_gamma", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// All global parameters: backbone weights, `gamma_raw` and the global head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: GlobalParams,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(rows, cols, data).expect("sized by construction")
}

impl GlobalParams {
    /// Random initialization: uniform in `±1/sqrt(fan_in)`, zero biases
    /// except LSTM forget gates (1), and `gamma = 1`.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let params = config
            .layout()
            .into_iter()
            .map(|(name, rows, cols)| {
                let tensor = if name == "gamma_raw" {
                    Tensor::scalar(GAMMA_RAW_INIT)
                } else if name.ends_with(".bias") {
                    let mut b = Tensor::zeros(rows, cols);
                    if name.starts_with("lstm") {
                        for r in h..2 * h {
                            b.set(r, 0, 1.0);
                        }
                    }
                    b
                } else {
                    let fan_in = if name == "head" { rows } else { cols };
                    uniform(rng, rows, cols, 1.0 / (fan_in as f64).sqrt())
                };
                NamedTensor {
                    name: name.to_string(),
                    tensor,
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.params[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| &mut self.params[i].tensor)
    }

    pub fn gamma_raw(&self) -> f64 {
        self.get("gamma_raw").map_or(GAMMA_RAW_INIT, Tensor::item)
    }

    /// The learned ridge penalty `softplus(gamma_raw) > 0`.
    pub fn gamma(&self) -> f64 {
        softplus(self.gamma_raw())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|p| &p.tensor)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// Checks that the stored tensors match the configuration's layout.
    pub fn check_layout(&self) -> Result<()> {
        let layout = self.config.layout();
        if layout.len() != self.params.len() {
            return Err(Error::Data(format!(
                "model has {} tensors, configuration needs {}",
                self.params.len(),
                layout.len()
            )));
        }
        for ((name, r, c), p) in layout.iter().zip(&self.params) {
            if *name != p.name || p.tensor.shape() != [*r, *c] {
                return Err(Error::Data(format!(
                    "tensor {} is {:?}, expected {name} {r}x{c}",
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::Data("model contains non-finite weights".into()));
        }
        Ok(())
    }

    /// Elementwise mean of several parameter sets with identical layout.
    pub fn average(snapshots: &[&GlobalParams]) -> Result<GlobalParams> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Training("no snapshots to average".into()))?;
        let mut out = (*first).clone();
        let k = snapshots.len() as f64;
        for (i, p) in out.params.iter_mut().enumerate() {
            let data = p.tensor.data_mut();
            // anchored at the first snapshot so identical inputs average exactly
            for (j, v) in data.iter_mut().enumerate() {
                let base = *v;
                let mut s = 0.0;
                for snap in snapshots {
                    s += snap.params[i].tensor.data()[j] - base;
                }
                *v = base + s / k;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG || file.version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        file.model.config.validate()?;
        file.model.check_layout()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
