//! Minibatch spectral embedding network.
//!
//! The network `F` ends in a linear "orthogonalization" layer whose weights
//! are not trained by gradient descent. Each iteration first recomputes them
//! from a QR factorization of the pre-layer batch output so that the batch
//! output `Y` satisfies `Y^T Y / m = I`, then takes one Adam step on the
//! remaining layers to reduce `Tr(Y^T L Y) / m^2` for the batch graph
//! Laplacian `L`. The converged output spans the leading eigenvectors up to
//! an unknown rotation, which [`separate`] removes afterwards.

mod separate;
pub mod serialize;
pub mod timing;

pub use separate::{diagonalize_rotated, embed, separate, separate_batches, SepSpectralModel, Separation};
pub use serialize::{load_model, load_trained, save_model, save_trained, ModelDocument, TrainedDocument, FORMAT_VERSION};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{qr, upper_triangular_inverse};
use crate::error::{Error, Result};
use crate::graph::{build_graph, LaplacianKind, LaplacianMatrix};
use crate::nn::{Adam, Gradients, Init, Mlp};

/// Tolerance of the batch orthonormality invariant.
pub const ORTHO_TOLERANCE: f64 = 1e-6;
/// Fresh batches tried when the pre-layer output is rank deficient.
pub const ORTHO_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of nontrivial eigenvectors; the network outputs `k + 1`.
    pub k: usize,
    pub batch_size: usize,
    /// Neighbors per vertex in every batch graph.
    pub k_nn: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub val_frac: f64,
    pub lr_divisor: f64,
    pub min_lr: f64,
    /// Relative validation improvement that resets the plateau counter.
    pub plateau_tolerance: f64,
    /// Hard cap on epochs in case the schedule never bottoms out.
    pub max_epochs: usize,
    /// Laplacian used inside the training loss.
    pub loss_laplacian: LaplacianKind,
    /// Laplacian used to rotate the learned basis onto eigenvectors.
    pub separation_laplacian: LaplacianKind,
    /// Batches averaged during separation; `None` uses `floor(n / m)`.
    pub separation_batches: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            batch_size: 2048,
            k_nn: 20,
            lr: 1e-2,
            hidden: vec![256, 256, 512],
            val_frac: 0.1,
            lr_divisor: 10.0,
            min_lr: 1e-7,
            plateau_tolerance: 1e-3,
            max_epochs: 1000,
            loss_laplacian: LaplacianKind::Unnormalized,
            separation_laplacian: LaplacianKind::RandomWalk,
            separation_batches: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.batch_size < self.k + 2 {
            return bad(format!("batch_size must be >= k + 2 = {}", self.k + 2));
        }
        if self.k_nn == 0 {
            return bad("k_nn must be positive".into());
        }
        if !(self.lr > 0.0 && self.min_lr > 0.0 && self.lr_divisor > 1.0) {
            return bad("learning-rate schedule needs lr > 0, min_lr > 0, lr_divisor > 1".into());
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return bad(format!("val_frac must lie in (0, 1), got {}", self.val_frac));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if self.loss_laplacian == LaplacianKind::RandomWalk {
            return bad("the training loss needs a symmetric Laplacian".into());
        }
        if self.separation_batches == Some(0) {
            return bad("separation_batches must be positive".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.k + 1);
        sizes
    }
}

/// Epochs without validation improvement before the learning rate drops:
/// 10 for small `n / m`, otherwise `max(1, round(250 m / n))`, so that the
/// number of optimizer steps per plateau stays roughly constant.
pub fn patience(n: usize, m: usize) -> usize {
    if n as f64 / m as f64 <= 25.0 {
        10
    } else {
        ((250.0 * m as f64 / n as f64).round() as usize).max(1)
    }
}

/// Network plus its orthogonalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNet {
    pub mlp: Mlp,
    /// `(k+1) × (k+1)` weights applied after the last hidden layer.
    pub ortho: Array2<f64>,
}

impl SpectralNet {
    pub fn new(cfg: &TrainConfig, input_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mlp = Mlp::new(&cfg.layer_sizes(input_dim), Init::HeUniform, rng)?;
        Ok(SpectralNet {
            mlp,
            ortho: Array2::eye(cfg.k + 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.ortho.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.mlp.forward(x).dot(&self.ortho)
    }
}

/// Largest entry of `|Y^T Y / m - I|`.
pub fn orthonormality_deviation(y: ArrayView2<f64>) -> f64 {
    let m = y.nrows() as f64;
    let g = y.t().dot(&y) / m;
    g.indexed_iter().fold(0.0f64, |acc, ((i, j), &v)| {
        let target = if i == j { 1.0 } else { 0.0 };
        acc.max((v - target).abs())
    })
}

/// `sqrt(m) R^{-1}` for the thin QR factorization of `pre`.
pub fn ortho_weights(pre: ArrayView2<f64>) -> Result<Array2<f64>> {
    let f = qr(pre)?;
    let inv = upper_triangular_inverse(&f.r)?;
    Ok(inv * (pre.nrows() as f64).sqrt())
}

/// Sets the orthogonalization weights from batch `x` and returns the
/// resulting deviation from batch orthonormality.
pub fn orthonorm_step(net: &mut SpectralNet, x: ArrayView2<f64>) -> Result<f64> {
    let pre = net.mlp.forward(x);
    net.ortho = ortho_weights(pre.view())?;
    Ok(orthonormality_deviation(pre.dot(&net.ortho).view()))
}

/// Batch Laplacian used inside the training loss.
pub fn batch_laplacian(x: ArrayView2<f64>, k_nn: usize, kind: LaplacianKind) -> Result<LaplacianMatrix> {
    let k_nn = k_nn.min(x.nrows() - 1);
    LaplacianMatrix::new(build_graph(x, k_nn)?, kind)
}

/// Loss `Tr(Y^T L Y) / m^2` for `Y = F(x)`, with the orthogonalization
/// layer fitted to this batch, and its gradient with respect to every
/// trainable layer.
///
/// The orthogonalization weights are not parameters, but they are a function
/// of the batch output: the gradient follows that dependence through the QR
/// factorization. Holding them constant instead lets gradient descent shrink
/// the output towards a rank-deficient matrix, which the next
/// orthogonalization step then amplifies.
pub fn rq_loss_and_grad(
    net: &SpectralNet,
    x: ArrayView2<f64>,
    lap: &LaplacianMatrix,
) -> Result<(f64, Gradients)> {
    let m = x.nrows() as f64;
    let (pre, cache) = net.mlp.forward_cached(x);
    let f = qr(pre.view())?;
    // Y = sqrt(m) Q, so the loss is Tr(Q^T L Q) / m.
    let loss = lap.rayleigh_trace(f.q.view()) / m;
    let grad_q = lap.apply(f.q.view()) * (2.0 / m);
    let grad_pre = qr_backward(&f.q, &f.r, grad_q)?;
    let grads = net.mlp.backward(&cache, grad_pre);
    let finite = loss.is_finite()
        && grads
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()));
    if !finite {
        return Err(Error::NonFinite(format!("training loss {loss} or its gradient")));
    }
    Ok((loss, grads))
}

/// Pulls `d loss / d Q` back to `d loss / d A` for a thin factorization
/// `A = QR` whose loss does not depend on `R`:
/// `(G + Q sym_lower(-G^T Q)) R^{-T}`, where `sym_lower` mirrors the lower
/// triangle onto the upper one.
fn qr_backward(q: &Array2<f64>, r: &Array2<f64>, grad_q: Array2<f64>) -> Result<Array2<f64>> {
    let mut c = -grad_q.t().dot(q);
    let p = c.nrows();
    for i in 0..p {
        for j in i + 1..p {
            c[[i, j]] = c[[j, i]];
        }
    }
    let r_inv = upper_triangular_inverse(r)?;
    Ok((grad_q + q.dot(&c)).dot(&r_inv.t()))
}

/// One Adam step on the batch loss; returns the loss before the step.
pub fn grad_step(
    net: &mut SpectralNet,
    opt: &mut Adam,
    x: ArrayView2<f64>,
    k_nn: usize,
    kind: LaplacianKind,
) -> Result<f64> {
    let lap = batch_laplacian(x, k_nn, kind)?;
    let (loss, grads) = rq_loss_and_grad(net, x, &lap)?;
    opt.step(&mut net.mlp, &grads);
    if !net.mlp.is_finite() {
        return Err(Error::NonFinite("network parameters after update".into()));
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MinLearningRate,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub ortho_steps: usize,
    pub ortho_max_deviation: f64,
    /// Orthogonalization steps whose deviation exceeded [`ORTHO_TOLERANCE`].
    pub ortho_violations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub net: SpectralNet,
    pub history: TrainHistory,
}

/// Validation loss of the current network: the orthogonalization layer is
/// recomputed on the validation set itself so that scale changes of the
/// hidden layers cannot lower the loss.
fn validation_loss(net: &SpectralNet, x: ArrayView2<f64>, lap: &LaplacianMatrix) -> Result<f64> {
    let pre = net.mlp.forward(x);
    let w = ortho_weights(pre.view())?;
    let y = pre.dot(&w);
    let m = x.nrows() as f64;
    Ok(lap.rayleigh_trace(y.view()) / (m * m))
}

/// Trains a network on the rows of `x` with the learning-rate schedule
/// "divide by `lr_divisor` after `patience` epochs without validation
/// improvement, stop once the rate falls below `min_lr`".
pub fn train(x: ArrayView2<f64>, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = SpectralNet::new(cfg, x.ncols(), &mut rng)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let min_val = (cfg.k + 2).max(cfg.k_nn + 1);
    let n_val = ((cfg.val_frac * n as f64).round() as usize).max(min_val);
    if n_val + cfg.k + 2 > n {
        return Err(Error::InvalidArgument(format!(
            "n = {n} is too small for a validation set of {n_val} rows"
        )));
    }
    let val_x = x.select(Axis(0), &order[..n_val]);
    let fit_idx: Vec<usize> = order[n_val..].to_vec();
    let n_fit = fit_idx.len();
    let m = cfg.batch_size.min(n_fit);
    let batches_per_epoch = n_fit / m;
    let patience = patience(n_fit, m);
    let val_lap = batch_laplacian(val_x.view(), cfg.k_nn, cfg.loss_laplacian)?;
    val_lap.affinity().check_connected("validation graph");

    let mut opt = Adam::new(&net.mlp, cfg.lr);
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        lr: Vec::new(),
        epochs: 0,
        batch_size: m,
        patience,
        ortho_steps: 0,
        ortho_max_deviation: 0.0,
        ortho_violations: 0,
        stop: StopReason::MaxEpochs,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut perm = fit_idx.clone();

    for _epoch in 0..cfg.max_epochs {
        perm.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for b in 0..batches_per_epoch {
            let mut batch = x.select(Axis(0), &perm[b * m..(b + 1) * m]);
            let mut attempts = 0;
            let deviation = loop {
                match orthonorm_step(&mut net, batch.view()) {
                    Ok(dev) => break dev,
                    Err(Error::RankDeficient(msg)) => {
                        attempts += 1;
                        if attempts > ORTHO_RETRIES {
                            return Err(Error::RankDeficient(format!(
                                "orthogonalization failed after {ORTHO_RETRIES} fresh batches: {msg}"
                            )));
                        }
                        let fresh: Vec<usize> =
                            fit_idx.choose_multiple(&mut rng, m).copied().collect();
                        batch = x.select(Axis(0), &fresh);
                    }
                    Err(e) => return Err(e),
                }
            };
            history.ortho_steps += 1;
            history.ortho_max_deviation = history.ortho_max_deviation.max(deviation);
            if deviation >= ORTHO_TOLERANCE {
                history.ortho_violations += 1;
            }
            debug_assert!(deviation < ORTHO_TOLERANCE, "orthonormality deviation {deviation}");
            epoch_loss += grad_step(&mut net, &mut opt, batch.view(), cfg.k_nn, cfg.loss_laplacian)?;
        }
        let val = validation_loss(&net, val_x.view(), &val_lap)?;
        if !val.is_finite() {
            return Err(Error::NonFinite("validation loss".into()));
        }
        history.train_loss.push(epoch_loss / batches_per_epoch as f64);
        history.val_loss.push(val);
        history.lr.push(opt.lr);
        history.epochs += 1;

        if val < best * (1.0 - cfg.plateau_tolerance) {
            best = val;
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                opt.lr /= cfg.lr_divisor;
                stale = 0;
                log::debug!("epoch {}: learning rate -> {:e}", history.epochs, opt.lr);
                if opt.lr < cfg.min_lr * (1.0 - 1e-9) {
                    history.stop = StopReason::MinLearningRate;
                    break;
                }
            }
        }
    }
    Ok(Trained { net, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use crate::eigen::eig_sym;
    use ndarray::array;
    use rand::Rng;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            k: 1,
            batch_size: 64,
            k_nn: 5,
            hidden: vec![16, 16],
            max_epochs: 30,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn patience_policy() {
        assert_eq!(patience(81920, 2048), 6);
        assert_eq!(patience(20 * 2048, 2048), 10);
        assert_eq!(patience(25 * 2048, 2048), 10);
        assert_eq!(patience(1_000_000, 2048), 1);
    }

    #[test]
    fn orthonorm_step_whitens_the_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = tiny_config();
        let mut net = SpectralNet::new(&cfg, 3, &mut rng).unwrap();
        let x = Array2::from_shape_fn((50, 3), |_| rng.gen_range(-1.0..1.0));
        let dev = orthonorm_step(&mut net, x.view()).unwrap();
        assert!(dev < 1e-10);
        assert!(orthonormality_deviation(net.forward(x.view()).view()) < 1e-6);

        // Hand recomputation through the QR routine.
        let pre = net.mlp.forward(x.view());
        let f = qr(pre.view()).unwrap();
        let expect = upper_triangular_inverse(&f.r).unwrap() * 50f64.sqrt();
        assert!((&expect - &net.ortho).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn already_whitened_output_gives_identity_weights() {
        let pre = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        assert!(orthonormality_deviation(pre.view()) < 1e-15);
        let w = ortho_weights(pre.view()).unwrap();
        for ((i, j), &v) in w.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v.abs() - target).abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn rq_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = TrainConfig {
            k: 1,
            hidden: vec![4],
            ..TrainConfig::default()
        };
        let mut net = SpectralNet::new(&cfg, 2, &mut rng).unwrap();
        let x = array![[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]];
        orthonorm_step(&mut net, x.view()).unwrap();
        let lap = batch_laplacian(x.view(), 2, LaplacianKind::Unnormalized).unwrap();
        let (_, grads) = rq_loss_and_grad(&net, x.view(), &lap).unwrap();
        let loss_of = |n: &SpectralNet| rq_loss_and_grad(n, x.view(), &lap).unwrap().0;
        let h = 1e-5;
        let mut worst = 0.0f64;
        for li in 0..net.mlp.layers.len() {
            for idx in 0..net.mlp.layers[li].weights.len() {
                let cols = net.mlp.layers[li].fan_out();
                let (r, c) = (idx / cols, idx % cols);
                let mut p = net.clone();
                p.mlp.layers[li].weights[[r, c]] += h;
                let mut q = net.clone();
                q.mlp.layers[li].weights[[r, c]] -= h;
                let fd = (loss_of(&p) - loss_of(&q)) / (2.0 * h);
                let an = grads[li].weights[[r, c]];
                let scale = fd.abs().max(an.abs()).max(1e-8);
                worst = worst.max((fd - an).abs() / scale);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn loss_is_nonnegative_and_depends_only_on_output_span() {
        let x = gen_synthetic(SyntheticKind::Moon, 60, 0.05, 3, 2).unwrap().samples;
        let lap = batch_laplacian(x.view(), 5, LaplacianKind::Unnormalized).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = tiny_config();
        let net = SpectralNet::new(&cfg, 3, &mut rng).unwrap();
        let (loss, _) = rq_loss_and_grad(&net, x.view(), &lap).unwrap();
        assert!(loss >= 0.0);

        // Mixing the output columns by an invertible matrix keeps the span.
        let mix = array![[2.0, 0.5], [-1.0, 3.0]];
        let mut mixed = net.clone();
        let last = mixed.mlp.layers.last_mut().unwrap();
        last.weights = last.weights.dot(&mix);
        last.bias = last.bias.dot(&mix);
        let (other, _) = rq_loss_and_grad(&mixed, x.view(), &lap).unwrap();
        assert!((loss - other).abs() < 1e-10 * loss, "{loss} vs {other}");

        // A constant output has no span to orthogonalize.
        let mut flat = net.clone();
        for l in flat.mlp.layers.iter_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.5);
        }
        assert!(matches!(
            rq_loss_and_grad(&flat, x.view(), &lap),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn training_is_deterministic_and_keeps_invariant() {
        let x = gen_synthetic(SyntheticKind::Moon, 300, 0.05, 4, 9).unwrap().samples;
        let cfg = tiny_config();
        let a = train(x.view(), &cfg).unwrap();
        let b = train(x.view(), &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.ortho_violations, 0);
        assert!(a.history.ortho_max_deviation < ORTHO_TOLERANCE);
        assert!(a.history.train_loss.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn training_lowers_loss_toward_batch_eigensum() {
        let x = gen_synthetic(SyntheticKind::Moon, 400, 0.05, 3, 5).unwrap().samples;
        let cfg = TrainConfig {
            max_epochs: 200,
            ..tiny_config()
        };
        let t = train(x.view(), &cfg).unwrap();
        let first = t.history.val_loss[0];
        let last = *t.history.val_loss.last().unwrap();
        assert!(last < 0.5 * first, "{first} -> {last}");

        // Lower bound: sum of the k+1 smallest eigenvalues of a batch
        // Laplacian, scaled like the loss.
        let lap = batch_laplacian(x.view(), cfg.k_nn, LaplacianKind::Unnormalized).unwrap();
        let e = eig_sym(&lap.to_dense().unwrap()).unwrap();
        let m = x.nrows() as f64;
        let bound = e.values.iter().take(cfg.k + 1).sum::<f64>() / m;
        let mut net = t.net.clone();
        orthonorm_step(&mut net, x.view()).unwrap();
        let loss = rq_loss_and_grad(&net, x.view(), &lap).unwrap().0;
        assert!(loss >= bound * (1.0 - 1e-9), "{loss} < {bound}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            loss_laplacian: LaplacianKind::RandomWalk,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
