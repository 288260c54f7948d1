//! Generalizable UMAP: a separated spectral embedding followed by a residual
//! network trained with the UMAP cross-entropy.
//!
//! The final embedding is `SE(x)[.., ..ell] + G(SE(x))`, where `SE` is a
//! frozen [`SepSpectralModel`] and `G` a small ReLU network.

use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::nn::{Adam, Init, Mlp};
use crate::specnet::serialize::{mlp_from_doc, mlp_to_doc, ArchDoc, LayerDoc, ModelDocument, FORMAT_VERSION};
use crate::specnet::{separate, train, SepSpectralModel, TrainConfig};

/// Floor applied inside the logarithms of the loss.
pub const LOG_EPS: f64 = 1e-4;

/// Undirected weighted edges of the high-dimensional neighborhood graph,
/// each pair stored once with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct UmapEdgeSet {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl UmapEdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Weight of `(i, j)` in either orientation, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges
            .iter()
            .find(|e| e.0 == a && e.1 == b)
            .map_or(0.0, |e| e.2)
    }
}

pub fn build_umap_graph(x: ArrayView2<f64>, n_neighbors: usize) -> Result<UmapEdgeSet> {
    let w = build_graph(x, n_neighbors)?;
    Ok(UmapEdgeSet {
        n: w.n(),
        edges: w.edges(),
    })
}

/// Low-dimensional similarity `1 / (1 + a d^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowDimKernel {
    pub a: f64,
    pub b: f64,
}

impl Default for LowDimKernel {
    fn default() -> Self {
        LowDimKernel { a: 1.0, b: 1.0 }
    }
}

impl LowDimKernel {
    pub fn similarity(&self, sq_dist: f64) -> f64 {
        1.0 / (1.0 + self.a * sq_dist.powf(self.b))
    }

    /// `(-w log w_l, d/ds)` for squared distance `s`, with the log floored.
    fn attract(&self, w: f64, s: f64) -> (f64, f64) {
        let wl = self.similarity(s);
        if wl < LOG_EPS {
            return (-w * LOG_EPS.ln(), 0.0);
        }
        let asb = self.a * s.powf(self.b);
        let d = if s > 0.0 { self.b * asb / s / (1.0 + asb) } else { 0.0 };
        (-w * wl.ln(), w * d)
    }

    /// `(-log(1 - w_l), d/ds)` for squared distance `s`, with the log floored.
    fn repel(&self, s: f64) -> (f64, f64) {
        let wl = self.similarity(s);
        if 1.0 - wl < LOG_EPS {
            return (-LOG_EPS.ln(), 0.0);
        }
        let asb = self.a * s.powf(self.b);
        let d = self.b * asb / s / (1.0 + asb) - self.b / s;
        (-(1.0 - wl).ln(), d)
    }
}

/// Negative partners for every edge, `per_edge` uniform vertices each.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSamples {
    pub per_edge: usize,
    pub vertices: Vec<usize>,
}

impl NegativeSamples {
    pub fn draw(edges: &UmapEdgeSet, per_edge: usize, rng: &mut ChaCha8Rng) -> Self {
        let vertices = (0..edges.len() * per_edge)
            .map(|_| rng.gen_range(0..edges.n))
            .collect();
        NegativeSamples { per_edge, vertices }
    }
}

/// Sampled cross-entropy, averaged over edges: an attractive term
/// `-w_h log w_l(y_i, y_j)` per edge and a repulsive term
/// `-log(1 - w_l(y_i, y_v))` for each of its negative partners `v`.
/// Returns the loss and its gradient with respect to `y`.
pub fn umap_loss(
    y: ArrayView2<f64>,
    edges: &UmapEdgeSet,
    negatives: &NegativeSamples,
    kernel: &LowDimKernel,
) -> Result<(f64, Array2<f64>)> {
    if y.nrows() != edges.n {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for a {}-vertex graph",
            y.nrows(),
            edges.n
        )));
    }
    if edges.is_empty() {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    if negatives.vertices.len() != edges.len() * negatives.per_edge {
        return Err(Error::InvalidArgument("negative samples do not match the edge set".into()));
    }
    let mut grad = Array2::<f64>::zeros(y.raw_dim());
    let mut loss = 0.0;
    let pull = |i: usize, j: usize, ds: f64, grad: &mut Array2<f64>| {
        if ds == 0.0 {
            return;
        }
        for c in 0..y.ncols() {
            let g = 2.0 * ds * (y[[i, c]] - y[[j, c]]);
            grad[[i, c]] += g;
            grad[[j, c]] -= g;
        }
    };
    let sq = |i: usize, j: usize| {
        y.row(i)
            .iter()
            .zip(y.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    for (e, &(i, j, w)) in edges.edges.iter().enumerate() {
        let (l, ds) = kernel.attract(w, sq(i, j));
        loss += l;
        pull(i, j, ds, &mut grad);
        for &v in &negatives.vertices[e * negatives.per_edge..(e + 1) * negatives.per_edge] {
            let (l, ds) = kernel.repel(sq(i, v));
            loss += l;
            if v != i {
                pull(i, v, ds, &mut grad);
            }
        }
    }
    let scale = 1.0 / edges.len() as f64;
    grad.mapv_inplace(|g| g * scale);
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumapConfig {
    /// Output dimension.
    pub ell: usize,
    pub n_neighbors: usize,
    pub neg_samples: usize,
    pub kernel: LowDimKernel,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    /// Add the first `ell` spectral coordinates to the network output.
    pub residual: bool,
    /// Stage-one spectral embedding; its `k` is the spectral dimension.
    pub se: TrainConfig,
    pub seed: u64,
}

impl Default for NumapConfig {
    fn default() -> Self {
        NumapConfig {
            ell: 2,
            n_neighbors: 10,
            neg_samples: 5,
            kernel: LowDimKernel::default(),
            hidden: vec![200, 200, 200],
            lr: 1e-3,
            epochs: 200,
            residual: true,
            se: TrainConfig {
                k: 5,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

impl NumapConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.ell == 0 {
            return bad("ell must be positive".into());
        }
        if self.residual && self.ell > self.se.k {
            return bad(format!("ell = {} exceeds the spectral dimension {}", self.ell, self.se.k));
        }
        if self.n_neighbors == 0 || self.neg_samples == 0 {
            return bad("n_neighbors and neg_samples must be positive".into());
        }
        if !(self.lr > 0.0 && self.kernel.a > 0.0 && self.kernel.b > 0.0) {
            return bad("lr and kernel parameters must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        self.se.validate()
    }
}

/// Where the second-stage network takes its input from.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Features {
    Spectral(SepSpectralModel),
    /// The raw coordinates; used for the baseline without a spectral stage.
    Raw { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumapModel {
    pub features: Features,
    pub embed_net: Mlp,
    pub residual: bool,
    pub config: NumapConfig,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

impl NumapModel {
    pub fn input_dim(&self) -> usize {
        match &self.features {
            Features::Spectral(se) => se.input_dim(),
            Features::Raw { dim } => *dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.embed_net.output_dim()
    }

    fn features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.features {
            Features::Spectral(se) => se.embed(x),
            Features::Raw { dim } => {
                if x.ncols() != *dim {
                    return Err(Error::DimensionMismatch(format!(
                        "model expects {dim} input columns, got {}",
                        x.ncols()
                    )));
                }
                Ok(x.to_owned())
            }
        }
    }

    fn head(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut y = self.embed_net.forward(f.view());
        if self.residual {
            y += &f.slice(s![.., ..self.output_dim()]);
        }
        y
    }
}

pub fn embed_numap(model: &NumapModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let f = model.features(x)?;
    Ok(model.head(&f))
}

/// Trains the spectral stage, then the residual network on top of it.
pub fn train_numap(x: ArrayView2<f64>, cfg: &NumapConfig) -> Result<NumapModel> {
    cfg.validate()?;
    let se_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.se.clone()
    };
    let trained = train(x, &se_cfg)?;
    let se = separate(trained, x, &se_cfg)?;
    fit_head(x, Features::Spectral(se), cfg.residual, cfg)
}

/// The same second stage trained directly on the raw coordinates.
pub fn train_baseline(x: ArrayView2<f64>, cfg: &NumapConfig) -> Result<NumapModel> {
    cfg.validate()?;
    fit_head(x, Features::Raw { dim: x.ncols() }, false, cfg)
}

/// Trains a head on top of an already trained spectral model, e.g. to share
/// one spectral stage between builds with and without the residual path.
pub fn train_head_on(
    x: ArrayView2<f64>,
    se: SepSpectralModel,
    residual: bool,
    cfg: &NumapConfig,
) -> Result<NumapModel> {
    cfg.validate()?;
    fit_head(x, Features::Spectral(se), residual, cfg)
}

fn fit_head(x: ArrayView2<f64>, features: Features, residual: bool, cfg: &NumapConfig) -> Result<NumapModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let edges = build_umap_graph(x, cfg.n_neighbors)?;

    let in_dim = match &features {
        Features::Spectral(se) => se.k(),
        Features::Raw { dim } => *dim,
    };
    if residual && cfg.ell > in_dim {
        return Err(Error::InvalidArgument(format!(
            "residual path needs ell = {} <= {in_dim}",
            cfg.ell
        )));
    }
    let mut sizes = vec![in_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(cfg.ell);
    // A zero last layer makes the residual build start exactly at the
    // spectral layout. Without the residual path a zero output would have
    // no gradient, so every layer is drawn at random.
    let init = if residual { Init::HeUniformZeroLast } else { Init::HeUniform };
    let embed_net = Mlp::new(&sizes, init, &mut rng)?;
    let mut model = NumapModel {
        features,
        embed_net,
        residual,
        config: NumapConfig {
            residual,
            ..cfg.clone()
        },
        loss_history: Vec::with_capacity(cfg.epochs),
    };

    let f = model.features(x)?;
    let mut opt = Adam::new(&model.embed_net, cfg.lr);
    for _ in 0..cfg.epochs {
        let negatives = NegativeSamples::draw(&edges, cfg.neg_samples, &mut rng);
        let (out, cache) = model.embed_net.forward_cached(f.view());
        let mut y = out;
        if residual {
            y += &f.slice(s![.., ..cfg.ell]);
        }
        let (loss, grad) = umap_loss(y.view(), &edges, &negatives, &cfg.kernel)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("embedding loss".into()));
        }
        // The residual term does not depend on the network parameters.
        let grads = model.embed_net.backward(&cache, grad);
        opt.step(&mut model.embed_net, &grads);
        if !model.embed_net.is_finite() {
            return Err(Error::NonFinite("embedding network parameters".into()));
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumapDocument {
    pub format_version: u32,
    /// Absent for the raw-coordinate baseline.
    pub spectral: Option<ModelDocument>,
    pub input_dim: usize,
    pub arch: ArchDoc,
    pub weights: Vec<LayerDoc>,
    pub residual: bool,
    pub config: NumapConfig,
    pub loss_history: Vec<f64>,
}

impl NumapDocument {
    pub fn from_model(model: &NumapModel) -> Self {
        let (arch, weights) = mlp_to_doc(&model.embed_net);
        NumapDocument {
            format_version: FORMAT_VERSION,
            spectral: match &model.features {
                Features::Spectral(se) => Some(ModelDocument::from_model(se)),
                Features::Raw { .. } => None,
            },
            input_dim: model.input_dim(),
            arch,
            weights,
            residual: model.residual,
            config: model.config.clone(),
            loss_history: model.loss_history.clone(),
        }
    }

    pub fn into_model(self) -> Result<NumapModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let embed_net = mlp_from_doc(&self.arch, &self.weights)?;
        let features = match self.spectral {
            Some(doc) => {
                let se = doc.into_model()?;
                if se.k() != embed_net.input_dim() {
                    return Err(Error::Data("spectral dimension does not match the network".into()));
                }
                Features::Spectral(se)
            }
            None => Features::Raw { dim: self.input_dim },
        };
        let model = NumapModel {
            features,
            embed_net,
            residual: self.residual,
            config: self.config,
            loss_history: self.loss_history,
        };
        if model.input_dim() != self.input_dim {
            return Err(Error::Data("input dimension does not match the network".into()));
        }
        Ok(model)
    }
}

pub fn save_numap(model: &NumapModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&NumapDocument::from_model(model))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_numap(path: impl AsRef<Path>) -> Result<NumapModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str::<NumapDocument>(&text)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use ndarray::array;

    fn toy_edges() -> UmapEdgeSet {
        UmapEdgeSet {
            n: 6,
            edges: vec![(0, 1, 1.0), (1, 2, 0.7), (2, 3, 0.4), (3, 4, 0.9), (4, 5, 0.25), (0, 5, 0.6)],
        }
    }

    fn toy_y() -> Array2<f64> {
        array![[0.0, 0.1], [0.8, -0.3], [1.5, 0.4], [0.2, 1.9], [-1.1, 0.7], [-0.6, -1.2]]
    }

    #[test]
    fn umap_graph_is_symmetric_and_bounded() {
        let x = gen_synthetic(SyntheticKind::TwoCircles, 120, 0.02, 3, 1).unwrap().samples;
        let g = build_umap_graph(x.view(), 10).unwrap();
        let mut degree = vec![0usize; g.n];
        for &(i, j, w) in &g.edges {
            assert!(i < j);
            assert!(w > 0.0 && w <= 1.0, "{w}");
            assert_eq!(g.weight(i, j), g.weight(j, i));
            degree[i] += 1;
            degree[j] += 1;
        }
        assert!(degree.iter().all(|&d| d >= 10));
    }

    #[test]
    fn matched_edge_has_zero_divergence() {
        // For one edge the full cross-entropy is
        // w log(w / w_l) + (1 - w) log((1 - w) / (1 - w_l)).
        let kernel = LowDimKernel::default();
        let w: f64 = 0.4;
        // 1 / (1 + d^2) = 0.4  =>  d^2 = 1.5.
        let wl = kernel.similarity(1.5);
        let kl = w * (w / wl).ln() + (1.0 - w) * ((1.0 - w) / (1.0 - wl)).ln();
        assert!(kl.abs() < 1e-15, "{kl}");
    }

    #[test]
    fn umap_gradient_matches_finite_differences() {
        let edges = toy_edges();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let negatives = NegativeSamples::draw(&edges, 5, &mut rng);
        for kernel in [LowDimKernel::default(), LowDimKernel { a: 1.6, b: 0.9 }] {
            let y = toy_y();
            let (_, grad) = umap_loss(y.view(), &edges, &negatives, &kernel).unwrap();
            let h = 1e-6;
            let mut worst = 0.0f64;
            for i in 0..y.nrows() {
                for c in 0..y.ncols() {
                    let mut p = y.clone();
                    p[[i, c]] += h;
                    let mut m = y.clone();
                    m[[i, c]] -= h;
                    let fd = (umap_loss(p.view(), &edges, &negatives, &kernel).unwrap().0
                        - umap_loss(m.view(), &edges, &negatives, &kernel).unwrap().0)
                        / (2.0 * h);
                    let an = grad[[i, c]];
                    worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
                }
            }
            assert!(worst < 1e-3, "max relative error {worst}");
        }
    }

    #[test]
    fn pulling_neighbors_together_lowers_attraction() {
        let kernel = LowDimKernel::default();
        let (far, _) = kernel.attract(0.8, 4.0);
        let (near, _) = kernel.attract(0.8, 1.0);
        assert!(near < far);
    }

    #[test]
    fn floored_logs_have_no_gradient() {
        let kernel = LowDimKernel::default();
        assert_eq!(kernel.repel(0.0), (-LOG_EPS.ln(), 0.0));
        assert_eq!(kernel.attract(1.0, 1e9).1, 0.0);
    }

    fn small_config() -> NumapConfig {
        NumapConfig {
            hidden: vec![16, 16],
            epochs: 60,
            lr: 1e-2,
            se: TrainConfig {
                k: 3,
                batch_size: 64,
                k_nn: 8,
                hidden: vec![16, 16],
                max_epochs: 30,
                ..TrainConfig::default()
            },
            seed: 4,
            ..NumapConfig::default()
        }
    }

    #[test]
    fn residual_model_starts_at_the_spectral_layout() {
        let x = gen_synthetic(SyntheticKind::TwoCircles, 200, 0.02, 3, 2).unwrap().samples;
        let cfg = NumapConfig {
            epochs: 0,
            ..small_config()
        };
        let model = train_numap(x.view(), &cfg).unwrap();
        let Features::Spectral(se) = &model.features else { panic!("expected spectral features") };
        let se_out = se.embed(x.view()).unwrap();
        let y = embed_numap(&model, x.view()).unwrap();
        assert_eq!(y.ncols(), 2);
        assert_eq!(y, se_out.slice(s![.., ..2]).to_owned());
    }

    #[test]
    fn training_lowers_the_loss_and_embeds_pointwise() {
        let x = gen_synthetic(SyntheticKind::TwoCircles, 200, 0.02, 3, 3).unwrap().samples;
        let cfg = small_config();
        let model = train_numap(x.view(), &cfg).unwrap();
        let h = &model.loss_history;
        assert!(h.last().unwrap() < &h[0], "{} -> {}", h[0], h.last().unwrap());

        let all = embed_numap(&model, x.view()).unwrap();
        let one = embed_numap(&model, x.slice(s![5..6, ..])).unwrap();
        for (a, b) in one.row(0).iter().zip(all.row(5)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!(embed_numap(&model, Array2::zeros((1, 4)).view()).is_err());
    }

    #[test]
    fn fixed_negative_schedule_loss_decreases() {
        // Plain gradient descent on the embedding itself with frozen negatives.
        let edges = toy_edges();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let negatives = NegativeSamples::draw(&edges, 5, &mut rng);
        let kernel = LowDimKernel::default();
        let mut y = toy_y();
        let (start, _) = umap_loss(y.view(), &edges, &negatives, &kernel).unwrap();
        let mut last = start;
        for _ in 0..200 {
            let (l, g) = umap_loss(y.view(), &edges, &negatives, &kernel).unwrap();
            assert!(l <= last + 1e-12);
            last = l;
            y = y - g * 0.05;
        }
        assert!(last < start);
    }

    #[test]
    fn json_round_trip_preserves_embeddings() {
        let x = gen_synthetic(SyntheticKind::TwoCircles, 150, 0.02, 3, 5).unwrap().samples;
        let cfg = NumapConfig {
            epochs: 10,
            ..small_config()
        };
        let dir = tempfile::tempdir().unwrap();
        for model in [train_numap(x.view(), &cfg).unwrap(), train_baseline(x.view(), &cfg).unwrap()] {
            let path = dir.path().join("numap.json");
            save_numap(&model, &path).unwrap();
            let back = load_numap(&path).unwrap();
            assert_eq!(back, model);
            assert_eq!(embed_numap(&back, x.view()).unwrap(), embed_numap(&model, x.view()).unwrap());
        }
    }
}
