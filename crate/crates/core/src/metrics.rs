//! Embedding and eigenvector quality measures.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::eigen::{laplacian_eigenpairs, orthonormal_basis, principal_angles};
use crate::error::{Error, Result};
use crate::graph::{build_graph, LaplacianKind, LaplacianMatrix};

/// Eigenvalue gap under which oracle eigenvectors are treated as one cluster
/// when matching predictions to them.
pub const MATCH_GAP: f64 = 1e-6;

/// `1 - (u·v)^2 / (|u|^2 |v|^2)`: squared sine of the angle between two
/// lines, blind to sign and scale.
pub fn sin2_distance(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let uu = u.dot(&u);
    let vv = v.dot(&v);
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::InvalidArgument("sin² distance of a zero vector".into()));
    }
    let uv = u.dot(&v);
    Ok((1.0 - uv * uv / (uu * vv)).clamp(0.0, 1.0))
}

/// Column-by-column [`sin2_distance`].
pub fn sin2_per_vector(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    pred.columns()
        .into_iter()
        .zip(truth.columns())
        .map(|(p, t)| sin2_distance(p, t))
        .collect()
}

/// Sum of squared sines of the principal angles between two column spans.
pub fn grassmann_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(angles.iter().map(|t| t.sin().powi(2)).sum())
}

/// The same quantity through projections: `k - |A^T B|_F^2` for orthonormal
/// bases `A`, `B`. Kept as an independent cross-check of
/// [`grassmann_distance`].
pub fn grassmann_distance_projection(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let cross = qa.t().dot(&qb);
    Ok((a.ncols() as f64 - cross.iter().map(|v| v * v).sum::<f64>()).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsConfig {
    /// Leading Laplacian eigenvectors compared, trivial one included.
    pub t_vecs: usize,
    pub gs_neighbors: usize,
}

impl Default for GsConfig {
    fn default() -> Self {
        GsConfig {
            t_vecs: 2,
            gs_neighbors: 50,
        }
    }
}

fn leading_vectors(x: ArrayView2<f64>, cfg: &GsConfig, what: &str) -> Result<Array2<f64>> {
    let k_nn = cfg.gs_neighbors.min(x.nrows() - 1);
    let w = build_graph(x, k_nn)?;
    w.check_connected(what);
    let lap = LaplacianMatrix::new(w, LaplacianKind::Unnormalized)?;
    Ok(laplacian_eigenpairs(&lap, cfg.t_vecs)?.vectors)
}

/// Grassmann distance between the leading eigenvectors of the kNN-graph
/// Laplacians built on `x` and on its embedding `y`. Lower is better.
pub fn grassmann_score(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &GsConfig) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} embedded rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if cfg.t_vecs < 2 || cfg.t_vecs >= x.nrows() {
        return Err(Error::InvalidArgument(format!(
            "t_vecs must satisfy 2 <= t_vecs < n, got {}",
            cfg.t_vecs
        )));
    }
    let vx = leading_vectors(x, cfg, "input graph")?;
    let vy = leading_vectors(y, cfg, "embedding graph")?;
    grassmann_distance(vx.view(), vy.view())
}

/// Accuracy of a `k_nn`-nearest-neighbor majority vote (ties go to the
/// smallest label). When the evaluation matrix is the training matrix itself
/// each point's own row is excluded from its vote.
pub fn knn_accuracy(
    y_train: ArrayView2<f64>,
    labels_train: Option<&[i64]>,
    y_eval: ArrayView2<f64>,
    labels_eval: Option<&[i64]>,
    k_nn: usize,
) -> Result<f64> {
    let (Some(lt), Some(le)) = (labels_train, labels_eval) else {
        return Err(Error::Data("kNN accuracy needs labels".into()));
    };
    if lt.len() != y_train.nrows() || le.len() != y_eval.nrows() {
        return Err(Error::DimensionMismatch("label count differs from row count".into()));
    }
    if y_train.ncols() != y_eval.ncols() {
        return Err(Error::DimensionMismatch("embedding widths differ".into()));
    }
    let same = y_train == y_eval;
    let pool = y_train.nrows() - usize::from(same);
    if k_nn == 0 || k_nn > pool {
        return Err(Error::InvalidArgument(format!("k_nn={k_nn} with {pool} candidates")));
    }
    let mut correct = 0usize;
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(y_train.nrows());
    for (i, q) in y_eval.rows().into_iter().enumerate() {
        cand.clear();
        for (j, r) in y_train.rows().into_iter().enumerate() {
            if same && i == j {
                continue;
            }
            let d: f64 = q.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            cand.push((d, j));
        }
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k_nn < cand.len() {
            cand.select_nth_unstable_by(k_nn - 1, by);
        }
        let mut votes: Vec<(i64, usize)> = Vec::new();
        for &(_, j) in &cand[..k_nn] {
            match votes.iter_mut().find(|(l, _)| *l == lt[j]) {
                Some(v) => v.1 += 1,
                None => votes.push((lt[j], 1)),
            }
        }
        let winner = votes
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|v| v.0)
            .expect("k_nn >= 1");
        if winner == le[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / y_eval.nrows() as f64)
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("pearson of a constant vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Minimum-cost assignment of every row to a distinct column
/// (`rows <= cols`), Hungarian algorithm with potentials.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(Error::InvalidArgument(format!("cannot assign {n} rows to {m} columns")));
    }
    // 1-based arrays, column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    Ok(assign)
}

fn sin2_matrix(truth: ArrayView2<f64>, pred: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut cost = Array2::zeros((truth.ncols(), pred.ncols()));
    for (i, t) in truth.columns().into_iter().enumerate() {
        for (j, p) in pred.columns().into_iter().enumerate() {
            cost[[i, j]] = sin2_distance(t, p)?;
        }
    }
    Ok(cost)
}

/// Per-truth-column sin² after choosing, for every truth column, a distinct
/// prediction column so that the total sin² is minimal. `pred` may have
/// more columns than `truth`.
pub fn sin2_best_assignment(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<f64>> {
    if pred.nrows() != truth.nrows() {
        return Err(Error::DimensionMismatch("row counts differ".into()));
    }
    let cost = sin2_matrix(truth, pred)?;
    let assign = hungarian(&cost)?;
    Ok(assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).collect())
}

/// Per-vector sin² where predictions may only be permuted among truth
/// columns whose eigenvalues lie within [`MATCH_GAP`] of each other.
pub fn sin2_matched(pred: ArrayView2<f64>, truth: ArrayView2<f64>, values: &[f64]) -> Result<Vec<f64>> {
    if pred.dim() != truth.dim() || values.len() != truth.ncols() {
        return Err(Error::DimensionMismatch("prediction, truth and eigenvalues disagree".into()));
    }
    let cost = sin2_matrix(truth, pred)?;
    let k = values.len();
    let mut out = vec![0.0; k];
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (values[end] - values[end - 1]).abs() < MATCH_GAP {
            end += 1;
        }
        let block = cost.slice(ndarray::s![start..end, start..end]).to_owned();
        let assign = hungarian(&block)?;
        for (i, &j) in assign.iter().enumerate() {
            out[start + i] = block[[i, j]];
        }
        start = end;
    }
    Ok(out)
}
