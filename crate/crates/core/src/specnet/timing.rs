//! Wall-clock scaling of training with the dataset size.
//!
//! Training to convergence takes a data-dependent number of epochs, so the
//! study runs a fixed epoch budget and reports time per sample per epoch.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{train, StopReason, TrainConfig};
use crate::data::{gen_synthetic, SyntheticKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Training wall-clock per seed.
    pub seconds: Vec<f64>,
    /// `seconds / (n * epochs)` per seed.
    pub per_sample: Vec<f64>,
    pub mean_per_sample: f64,
    pub std_per_sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub dataset: String,
    pub ambient: usize,
    pub epochs: usize,
    pub config: TrainConfig,
    pub points: Vec<ScalingPoint>,
}

impl ScalingStudy {
    /// Mean per-sample time at the largest size over that at the smallest.
    pub fn ratio(&self) -> Option<f64> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        Some(last.mean_per_sample / first.mean_per_sample)
    }
}

pub const MOON_AMBIENT: usize = 10;
pub const MOON_NOISE: f64 = 0.05;

/// Seconds spent in [`train`] on a fresh moon sample of size `n`, running
/// exactly `epochs` epochs.
pub fn time_training(n: usize, seed: u64, epochs: usize, cfg: &TrainConfig) -> Result<f64> {
    let x = gen_synthetic(SyntheticKind::Moon, n, MOON_NOISE, MOON_AMBIENT, seed)?.samples;
    let cfg = TrainConfig {
        max_epochs: epochs,
        seed,
        ..cfg.clone()
    };
    let start = Instant::now();
    let trained = train(x.view(), &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    if trained.history.stop != StopReason::MaxEpochs || trained.history.epochs != epochs {
        return Err(Error::Numerical(format!(
            "training stopped after {} of {epochs} epochs",
            trained.history.epochs
        )));
    }
    Ok(secs)
}

pub fn scaling_study(sizes: &[usize], seeds: &[u64], epochs: usize, cfg: &TrainConfig) -> Result<ScalingStudy> {
    if sizes.is_empty() || seeds.is_empty() || epochs == 0 {
        return Err(Error::InvalidArgument("need sizes, seeds and a positive epoch budget".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut seconds = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let s = time_training(n, seed, epochs, cfg)?;
            log::info!("n = {n}, seed = {seed}: {s:.2} s");
            seconds.push(s);
        }
        let per_sample: Vec<f64> = seconds.iter().map(|s| s / (n * epochs) as f64).collect();
        let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        let var = per_sample.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / per_sample.len() as f64;
        points.push(ScalingPoint {
            n,
            seeds: seeds.to_vec(),
            seconds,
            per_sample,
            mean_per_sample: mean,
            std_per_sample: var.sqrt(),
        });
    }
    Ok(ScalingStudy {
        dataset: "moon".into(),
        ambient: MOON_AMBIENT,
        epochs,
        config: cfg.clone(),
        points,
    })
}
