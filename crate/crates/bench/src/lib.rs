//! Shared fixtures for the kernel benchmarks.

use ndarray::Array2;

use eigensep_core::data::gen_synthetic;
use eigensep_core::specnet::timing::{MOON_AMBIENT, MOON_NOISE};
use eigensep_core::{SepSpectralModel, SyntheticKind, TrainConfig};

/// Moon samples in the ambient dimension used by the scaling study.
pub fn moon(n: usize, seed: u64) -> Array2<f64> {
    gen_synthetic(SyntheticKind::Moon, n, MOON_NOISE, MOON_AMBIENT, seed)
        .expect("moon generation")
        .samples
}

/// A small network configuration that keeps each benchmark iteration short.
pub fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 512,
        hidden: vec![64, 64],
        k_nn: 15,
        ..TrainConfig::default()
    }
}

/// A separated model trained for a handful of epochs; quality is irrelevant,
/// only the inference cost is measured.
pub fn quick_model(x: &Array2<f64>) -> SepSpectralModel {
    let cfg = TrainConfig {
        max_epochs: 3,
        ..small_config()
    };
    let trained = eigensep_core::specnet::train(x.view(), &cfg).expect("training");
    eigensep_core::specnet::separate(trained, x.view(), &cfg).expect("separation")
}
