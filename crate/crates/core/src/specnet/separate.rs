use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{batch_laplacian, SpectralNet, TrainConfig, TrainHistory, Trained};
use crate::eigen::{eig_sym, SymEigen};
use crate::error::{Error, Result};
use crate::graph::LaplacianMatrix;

/// Eigenvalues more negative than this indicate a broken separation.
const NEGATIVE_TOLERANCE: f64 = 1e-8;

/// A trained network together with the rotation that maps its output onto
/// individual eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SepSpectralModel {
    pub net: SpectralNet,
    /// `(k+1) × k`; column `j` picks out the `(j+1)`-th nontrivial eigenvector.
    pub rotation: Array2<f64>,
    /// Ascending nontrivial eigenvalues, length `k`.
    pub eigenvalues: Array1<f64>,
    /// Eigenvalue of the dropped (constant) direction.
    pub trivial_eigenvalue: f64,
    pub history: Option<TrainHistory>,
    pub config: TrainConfig,
}

impl SepSpectralModel {
    pub fn k(&self) -> usize {
        self.rotation.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Network output before separation, `n × (k+1)`.
    pub fn raw(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.input_dim(), x)?;
        Ok(self.net.forward(x))
    }

    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.raw(x)?.dot(&self.rotation))
    }
}

fn check_dim(expected: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch(format!(
            "model expects {expected} input columns, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

/// `F(x) Q`: one forward pass and a right multiplication, no graph needed.
pub fn embed(model: &SepSpectralModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.embed(x)
}

/// Outcome of diagonalizing the averaged rotated eigenvalue matrix.
#[derive(Debug, Clone)]
pub struct Separation {
    pub rotation: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub trivial_eigenvalue: f64,
    /// The symmetrized average `(1/T) sum_i Y_i^T L_i Y_i / m_i`.
    pub rotated: Array2<f64>,
}

/// Symmetrizes and diagonalizes a rotated eigenvalue matrix. For
/// `M = Q^T diag(λ) Q` with orthogonal `Q` the eigenvalues come back as the
/// ascending `λ` and the eigenvector matrix as `Q^T` up to column signs.
pub fn diagonalize_rotated(m: &Array2<f64>) -> Result<SymEigen> {
    let sym = (m + &m.t()) * 0.5;
    eig_sym(&sym)
}

/// Separation from explicit `(Y_i, L_i)` pairs, each `Y_i` holding the
/// network output on the vertices of `L_i`.
pub fn separate_batches(batches: &[(Array2<f64>, LaplacianMatrix)]) -> Result<Separation> {
    let Some((first, _)) = batches.first() else {
        return Err(Error::InvalidArgument("separation needs at least one batch".into()));
    };
    let p = first.ncols();
    if p < 2 {
        return Err(Error::InvalidArgument(
            "separation needs at least two output columns".into(),
        ));
    }
    let mut acc = Array2::<f64>::zeros((p, p));
    for (y, lap) in batches {
        if y.ncols() != p || y.nrows() != lap.n() {
            return Err(Error::DimensionMismatch(format!(
                "batch output {:?} does not match a {}-vertex graph with {p} columns",
                y.dim(),
                lap.n()
            )));
        }
        let m = y.nrows() as f64;
        acc = acc + y.t().dot(&lap.apply(y.view())) / m;
    }
    acc /= batches.len() as f64;
    let rotated = (&acc + &acc.t()) * 0.5;
    let eig = diagonalize_rotated(&rotated)?;
    if eig.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("separation eigenvalues".into()));
    }
    // eig_sym sorts ascending, so the smallest eigenvalue (the trivial
    // direction) is column 0.
    let nontrivial = eig.values.slice(s![1..]);
    if let Some(v) = nontrivial.iter().find(|&&v| v < -NEGATIVE_TOLERANCE) {
        return Err(Error::Numerical(format!("separation produced eigenvalue {v:e} < 0")));
    }
    Ok(Separation {
        rotation: eig.vectors.slice(s![.., 1..]).to_owned(),
        eigenvalues: nontrivial.mapv(|v| v.max(0.0)),
        trivial_eigenvalue: eig.values[0],
        rotated,
    })
}

/// Flips rotation columns so that the largest-magnitude entry of each
/// embedding column over `reference` is positive.
fn fix_signs(net: &SpectralNet, rotation: &mut Array2<f64>, reference: ArrayView2<f64>) {
    let emb = net.forward(reference).dot(rotation);
    for (j, col) in emb.axis_iter(Axis(1)).enumerate() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            rotation.column_mut(j).mapv_inplace(|v| -v);
        }
    }
}

/// Averages the rotated eigenvalue matrix over `T` random batches of the
/// training data (`T = floor(n / m)` unless configured), diagonalizes it and
/// keeps every eigenvector but the one with the smallest eigenvalue.
pub fn separate(trained: Trained, x: ArrayView2<f64>, cfg: &TrainConfig) -> Result<SepSpectralModel> {
    let Trained { net, history } = trained;
    check_dim(net.input_dim(), x)?;
    let n = x.nrows();
    let m = cfg.batch_size.min(n);
    let t = cfg.separation_batches.unwrap_or(n / m).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);

    let mut indices: Vec<Vec<usize>> = Vec::with_capacity(t);
    if t * m <= n {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for b in 0..t {
            indices.push(perm[b * m..(b + 1) * m].to_vec());
        }
    } else {
        let all: Vec<usize> = (0..n).collect();
        for _ in 0..t {
            indices.push(all.choose_multiple(&mut rng, m).copied().collect());
        }
    }

    let mut batches = Vec::with_capacity(t);
    for idx in &indices {
        let xb = x.select(Axis(0), idx);
        let lap = batch_laplacian(xb.view(), cfg.k_nn, cfg.separation_laplacian)?;
        batches.push((net.forward(xb.view()), lap));
    }
    let sep = separate_batches(&batches)?;
    let mut rotation = sep.rotation;
    fix_signs(&net, &mut rotation, x);
    Ok(SepSpectralModel {
        net,
        rotation,
        eigenvalues: sep.eigenvalues,
        trivial_eigenvalue: sep.trivial_eigenvalue,
        history: Some(history),
        config: cfg.clone(),
    })
}
