//! Versioned JSON model documents with nested row-major arrays.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{SepSpectralModel, SpectralNet, TrainConfig, TrainHistory, Trained};
use crate::error::{Error, Result};
use crate::nn::{Dense, Mlp};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDoc {
    pub layer_sizes: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub arch: ArchDoc,
    pub weights: Vec<LayerDoc>,
    pub ortho_weights: Vec<Vec<f64>>,
    pub rotation: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub trivial_eigenvalue: f64,
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<TrainHistory>,
}

pub(crate) fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Data(format!("{what}: ragged matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((r, c), flat).map_err(|e| Error::Data(format!("{what}: {e}")))
}

pub(crate) fn mlp_to_doc(mlp: &Mlp) -> (ArchDoc, Vec<LayerDoc>) {
    let arch = ArchDoc {
        layer_sizes: mlp.sizes(),
        activation: "relu".into(),
    };
    let layers = mlp
        .layers
        .iter()
        .map(|l| LayerDoc {
            weights: to_rows(&l.weights),
            bias: l.bias.to_vec(),
        })
        .collect();
    (arch, layers)
}

pub(crate) fn mlp_from_doc(arch: &ArchDoc, layers: &[LayerDoc]) -> Result<Mlp> {
    if arch.activation != "relu" {
        return Err(Error::Data(format!("unsupported activation {:?}", arch.activation)));
    }
    if arch.layer_sizes.len() != layers.len() + 1 || layers.is_empty() {
        return Err(Error::Data("layer count does not match architecture".into()));
    }
    let mut out = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let weights = from_rows(&l.weights, "layer weights")?;
        let expect = (arch.layer_sizes[i], arch.layer_sizes[i + 1]);
        if weights.dim() != expect || l.bias.len() != expect.1 {
            return Err(Error::Data(format!(
                "layer {i} has shape {:?}, architecture says {expect:?}",
                weights.dim()
            )));
        }
        out.push(Dense {
            weights,
            bias: Array1::from_vec(l.bias.clone()),
        });
    }
    let mlp = Mlp { layers: out };
    if !mlp.is_finite() {
        return Err(Error::Data("non-finite network parameter".into()));
    }
    Ok(mlp)
}

impl ModelDocument {
    pub fn from_model(model: &SepSpectralModel) -> Self {
        let (arch, weights) = mlp_to_doc(&model.net.mlp);
        ModelDocument {
            format_version: FORMAT_VERSION,
            arch,
            weights,
            ortho_weights: to_rows(&model.net.ortho),
            rotation: to_rows(&model.rotation),
            eigenvalues: model.eigenvalues.to_vec(),
            trivial_eigenvalue: model.trivial_eigenvalue,
            config: model.config.clone(),
            history: model.history.clone(),
        }
    }

    pub fn into_model(self) -> Result<SepSpectralModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let mlp = mlp_from_doc(&self.arch, &self.weights)?;
        let ortho = from_rows(&self.ortho_weights, "ortho_weights")?;
        let rotation = from_rows(&self.rotation, "rotation")?;
        let p = mlp.output_dim();
        if ortho.dim() != (p, p) || rotation.nrows() != p || rotation.ncols() != self.eigenvalues.len() {
            return Err(Error::Data("inconsistent output-layer shapes".into()));
        }
        Ok(SepSpectralModel {
            net: SpectralNet { mlp, ortho },
            rotation,
            eigenvalues: Array1::from_vec(self.eigenvalues),
            trivial_eigenvalue: self.trivial_eigenvalue,
            history: self.history,
            config: self.config,
        })
    }
}

/// A trained network before separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDocument {
    pub format_version: u32,
    pub arch: ArchDoc,
    pub weights: Vec<LayerDoc>,
    pub ortho_weights: Vec<Vec<f64>>,
    pub config: TrainConfig,
    pub history: TrainHistory,
}

impl TrainedDocument {
    pub fn from_trained(trained: &Trained, config: &TrainConfig) -> Self {
        let (arch, weights) = mlp_to_doc(&trained.net.mlp);
        TrainedDocument {
            format_version: FORMAT_VERSION,
            arch,
            weights,
            ortho_weights: to_rows(&trained.net.ortho),
            config: config.clone(),
            history: trained.history.clone(),
        }
    }

    pub fn into_trained(self) -> Result<(Trained, TrainConfig)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let mlp = mlp_from_doc(&self.arch, &self.weights)?;
        let ortho = from_rows(&self.ortho_weights, "ortho_weights")?;
        let p = mlp.output_dim();
        if ortho.dim() != (p, p) {
            return Err(Error::Data("inconsistent output-layer shapes".into()));
        }
        let trained = Trained {
            net: SpectralNet { mlp, ortho },
            history: self.history,
        };
        Ok((trained, self.config))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_trained(trained: &Trained, config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    write_json(&TrainedDocument::from_trained(trained, config), path.as_ref())
}

pub fn load_trained(path: impl AsRef<Path>) -> Result<(Trained, TrainConfig)> {
    read_json::<TrainedDocument>(path.as_ref())?.into_trained()
}

pub fn save_model(model: &SepSpectralModel, path: impl AsRef<Path>) -> Result<()> {
    write_json(&ModelDocument::from_model(model), path.as_ref())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SepSpectralModel> {
    read_json::<ModelDocument>(path.as_ref())?.into_model()
}
