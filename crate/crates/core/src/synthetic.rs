//! Seeded generators of seasonal series with trend and noise, for tests,
//! demos and benchmarks.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::{Dataset, DatasetMeta, Frequency, TimeSeries};

/// Ranges the per-series shape parameters are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub freq: Frequency,
    pub period: usize,
    pub length: RangeInclusive<usize>,
    /// Median level; levels are log-normal around it.
    pub level: f64,
    pub level_spread: f64,
    /// Relative growth per step.
    pub slope: (f64, f64),
    /// Relative seasonal amplitude.
    pub amplitude: (f64, f64),
    /// Relative noise standard deviation.
    pub noise: (f64, f64),
}

impl Generator {
    /// Quarterly source-style series.
    pub fn quarterly_source() -> Self {
        Self {
            freq: Frequency::Quarterly,
            period: 4,
            length: 40..=120,
            level: 200.0,
            level_spread: 1.0,
            slope: (-0.004, 0.015),
            amplitude: (0.0, 0.35),
            noise: (0.01, 0.06),
        }
    }

    /// Like [`Generator::quarterly_source`] with stronger seasonality and
    /// trend, different levels and shorter histories.
    pub fn quarterly_shifted() -> Self {
        Self {
            freq: Frequency::Quarterly,
            period: 4,
            length: 32..=80,
            level: 1500.0,
            level_spread: 0.7,
            slope: (0.0, 0.025),
            amplitude: (0.25, 0.55),
            noise: (0.02, 0.08),
        }
    }

    fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
        if lo < hi {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    }

    /// One series; the seasonal shape is a random mix of two harmonics.
    pub fn series(&self, item_id: impl Into<String>, rng: &mut impl Rng) -> TimeSeries {
        let len = rng.gen_range(self.length.clone());
        let level = LogNormal::new(self.level.ln(), self.level_spread)
            .expect("finite parameters")
            .sample(rng);
        let slope = Self::uniform(rng, self.slope);
        let amp = Self::uniform(rng, self.amplitude);
        let noise_sd = Self::uniform(rng, self.noise);
        let phase = rng.gen_range(0.0..TAU);
        let second = rng.gen_range(0.0..0.5);
        let noise = Normal::new(0.0, noise_sd).expect("finite parameters");
        let values = (0..len)
            .map(|t| {
                let x = TAU * t as f64 / self.period as f64 + phase;
                let season = (x.sin() + second * (2.0 * x).cos()) / (1.0 + second);
                let trend = (1.0 + slope).powi(t as i32);
                let v = level * trend * (1.0 + amp * season) * (1.0 + noise.sample(rng));
                v.max(0.0)
            })
            .collect();
        TimeSeries::new(item_id, self.freq, values)
    }

    /// `n` series with ids `{prefix}{i}`, reproducible from `seed`.
    pub fn dataset(&self, n: usize, prediction_length: usize, prefix: &str, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset {
            meta: DatasetMeta {
                freq: self.freq,
                prediction_length,
            },
            series: (0..n)
                .map(|i| self.series(format!("{prefix}{i}"), &mut rng))
                .collect(),
        }
    }
}

/// `copies` identical sinusoids around a constant level.
pub fn sinusoid_dataset(copies: usize, len: usize, period: usize, freq: Frequency, horizon: usize) -> Dataset {
    let values: Vec<f64> = (0..len)
        .map(|t| 10.0 + 3.0 * (TAU * t as f64 / period as f64).sin())
        .collect();
    Dataset {
        meta: DatasetMeta {
            freq,
            prediction_length: horizon,
        },
        series: (0..copies)
            .map(|i| TimeSeries::new(format!("sin{i}"), freq, values.clone()))
            .collect(),
    }
}
