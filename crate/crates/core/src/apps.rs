//! Fiedler vectors and diffusion maps, computed either from exact
//! eigenpairs or from a separated network.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::eigen::{normalize_signs, SpectralResult};
use crate::error::{Error, Result};
use crate::graph::LaplacianKind;
use crate::specnet::SepSpectralModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Diffusion time.
    pub t: u32,
    /// Number of embedding columns.
    pub k: usize,
}

/// Where the first nontrivial eigenpair comes from.
#[derive(Debug, Clone, Copy)]
pub enum FiedlerSource<'a> {
    /// A separated network evaluated on the given points.
    Model(&'a SepSpectralModel, ArrayView2<'a, f64>),
    Oracle(&'a SpectralResult),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fiedler {
    pub vector: Array1<f64>,
    pub value: f64,
}

/// Nontrivial eigenpairs of a model, evaluated on `x`, in the same form as
/// an oracle result so both can feed [`diffusion_map`].
pub fn model_spectral_result(model: &SepSpectralModel, x: ArrayView2<f64>) -> Result<SpectralResult> {
    Ok(SpectralResult {
        vectors: model.embed(x)?,
        values: model.eigenvalues.clone(),
        includes_trivial: false,
        variant: model.config.separation_laplacian,
        near_degenerate: false,
    })
}

/// Columns and values of `result` without the trivial pair.
fn nontrivial(result: &SpectralResult) -> (ArrayView2<'_, f64>, ndarray::ArrayView1<'_, f64>) {
    let skip = usize::from(result.includes_trivial);
    (
        result.vectors.slice(s![.., skip..]),
        result.values.slice(s![skip..]),
    )
}

pub fn fiedler(source: FiedlerSource<'_>) -> Result<Fiedler> {
    let result = match source {
        FiedlerSource::Model(model, x) => model_spectral_result(model, x)?,
        FiedlerSource::Oracle(r) => r.clone(),
    };
    let (vectors, values) = nontrivial(&result);
    if vectors.ncols() == 0 || values.is_empty() {
        return Err(Error::InvalidArgument("source has no nontrivial eigenpair".into()));
    }
    let mut col = vectors.slice(s![.., 0..1]).to_owned();
    normalize_signs(&mut col);
    Ok(Fiedler {
        vector: col.index_axis_move(Axis(1), 0),
        value: values[0].max(0.0),
    })
}

/// `k` columns `(1 - λ_i)^t v_i` over the nontrivial random-walk eigenpairs.
pub fn diffusion_map(result: &SpectralResult, cfg: &DiffusionConfig) -> Result<Array2<f64>> {
    if result.variant != LaplacianKind::RandomWalk {
        return Err(Error::InvalidArgument(format!(
            "diffusion maps need random-walk eigenpairs, got {}",
            result.variant
        )));
    }
    let (vectors, values) = nontrivial(result);
    if cfg.k > vectors.ncols() || cfg.k > values.len() {
        return Err(Error::InvalidArgument(format!(
            "diffusion map asks for {} columns but only {} are available",
            cfg.k,
            vectors.ncols().min(values.len())
        )));
    }
    let mut out = vectors.slice(s![.., ..cfg.k]).to_owned();
    for (i, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let mut lambda = values[i];
        if !(0.0..=2.0).contains(&lambda) {
            log::warn!("random-walk eigenvalue {lambda:e} outside [0, 2]; clipping");
            lambda = lambda.clamp(0.0, 2.0);
        }
        let scale = (1.0 - lambda).powi(cfg.t as i32);
        col.mapv_inplace(|v| v * scale);
    }
    Ok(out)
}
