//! kNN graphs, Laplace-kernel affinities and graph Laplacians.
//!
//! Affinities follow the UMAP-style local scaling: for every point `i` with
//! neighbor distances `δ_i1 <= ... <= δ_ik`, `ρ_i = δ_i1`, `σ_i` is the
//! median of the `k` distances and the directed weight to neighbor `j` is
//! `exp((ρ_i - δ_ij) / σ_i)`. The stored matrix is `(W + W^T) / 2`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible local bandwidth.
pub const MIN_SIGMA: f64 = 1e-12;
/// Largest graph the dense export will materialize.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
}

/// Exact k nearest neighbors of every row, self excluded, sorted by
/// `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborLists {
    pub fn n(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force k nearest neighbors under `metric`.
pub fn knn(x: ArrayView2<f64>, k_nn: usize, metric: Metric) -> Result<NeighborLists> {
    let Metric::Euclidean = metric;
    let n = x.nrows();
    if k_nn == 0 || k_nn >= n {
        return Err(Error::InvalidArgument(format!(
            "k_nn must satisfy 1 <= k_nn < n, got k_nn={k_nn}, n={n}"
        )));
    }
    let x = x.as_standard_layout();
    let d = x.ncols();
    let data = x.as_slice().expect("standard layout");
    let mut indices = Vec::with_capacity(n * k_nn);
    let mut distances = Vec::with_capacity(n * k_nn);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));

    for i in 0..n {
        let xi = &data[i * d..(i + 1) * d];
        cand.clear();
        for j in 0..n {
            if j != i {
                cand.push((sq_dist(xi, &data[j * d..(j + 1) * d]), j));
            }
        }
        if k_nn < cand.len() {
            cand.select_nth_unstable_by(k_nn - 1, by_dist);
        }
        let best = &mut cand[..k_nn];
        best.sort_unstable_by(by_dist);
        for &(dist, j) in best.iter() {
            if !dist.is_finite() {
                return Err(Error::NonFinite(format!("distance between rows {i} and {j}")));
            }
            indices.push(j);
            distances.push(dist.sqrt());
        }
    }
    Ok(NeighborLists {
        k: k_nn,
        indices,
        distances,
    })
}

/// Median with the even-count convention of averaging the central pair.
fn median_sorted(v: &[f64]) -> f64 {
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Directed kernel weights `exp((ρ_i - δ_ij)/σ_i)`, laid out like the
/// neighbor lists (row `i`, slot `j`).
pub fn directed_weights(neighbors: &NeighborLists) -> Vec<f64> {
    let k = neighbors.k();
    let mut out = Vec::with_capacity(neighbors.n() * k);
    for i in 0..neighbors.n() {
        let dist = neighbors.distances(i);
        let rho = dist[0];
        let sigma = median_sorted(dist).max(MIN_SIGMA);
        for &dj in dist {
            let w = ((rho - dj) / sigma).exp();
            out.push(w.max(f64::MIN_POSITIVE));
        }
    }
    out
}

/// Symmetric weighted graph in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseAffinity {
    /// Builds a graph from `(row, col, weight)` triplets that already
    /// describe a symmetric matrix. Duplicates are summed.
    fn from_symmetric_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut offsets = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut weights: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, w) in triplets {
            if last == Some((r, c)) {
                *weights.last_mut().unwrap() += w;
            } else {
                cols.push(c);
                weights.push(w);
                offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        SparseAffinity {
            n,
            offsets,
            cols,
            weights,
        }
    }

    /// Undirected weighted edges. A pair listed in both directions with
    /// different weights gets their mean.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Data(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::Data(format!("self loop at vertex {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Data(format!("edge ({i}, {j}) has weight {w}")));
            }
            map.insert((i, j), w);
        }
        let mut triplets = Vec::with_capacity(2 * map.len());
        for (&(i, j), &w) in &map {
            let sym = match map.get(&(j, i)) {
                Some(&v) => (w + v) * 0.5,
                None => w,
            };
            triplets.push((i, j, sym));
            if !map.contains_key(&(j, i)) {
                triplets.push((j, i, sym));
            }
        }
        Ok(Self::from_symmetric_triplets(n, triplets))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored (directed) entries; every undirected edge counts twice.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    /// Largest `|W_ij - W_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                worst = worst.max((w - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Result<Array2<f64>> {
        if self.n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense export limited to n <= {DENSE_LIMIT}, got {}",
                self.n
            )));
        }
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                m[[i, j]] = w;
            }
        }
        Ok(m)
    }

    /// Connected component label per vertex (labels are `0..count`).
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for (u, _) in self.row(v) {
                    if label[u] == usize::MAX {
                        label[u] = count;
                        stack.push(u);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    /// Logs a warning and returns `false` when the graph is disconnected.
    pub fn check_connected(&self, context: &str) -> bool {
        let (count, _) = self.components();
        if count > 1 {
            log::warn!("{context}: graph has {count} connected components");
            false
        } else {
            true
        }
    }

    pub fn save_edge_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["i", "j", "w"]).map_err(|e| csv_err(path, e))?;
        for (i, j, wt) in self.edges() {
            w.write_record([i.to_string(), j.to_string(), wt.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a 3-column `i,j,w` edge list. `n` defaults to one more than the
    /// largest vertex index.
    pub fn load_edge_csv(path: impl AsRef<Path>, n: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut edges = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    row: row + 1,
                    column: rec.len(),
                    message: "expected 3 columns i,j,w".into(),
                });
            }
            let field = |c: usize| rec[c].trim().to_string();
            let i: usize = field(0).parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: 1,
                message: format!("invalid vertex index {:?}", &rec[0]),
            })?;
            let j: usize = field(1).parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: 2,
                message: format!("invalid vertex index {:?}", &rec[1]),
            })?;
            let w: f64 = field(2).parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: 3,
                message: format!("invalid weight {:?}", &rec[2]),
            })?;
            edges.push((i, j, w));
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Symmetrized Laplace-kernel affinity of the kNN graph.
pub fn affinity(neighbors: &NeighborLists) -> SparseAffinity {
    let n = neighbors.n();
    let k = neighbors.k();
    let directed = directed_weights(neighbors);
    let mut triplets = Vec::with_capacity(2 * n * k);
    for i in 0..n {
        for (slot, &j) in neighbors.indices(i).iter().enumerate() {
            let half = 0.5 * directed[i * k + slot];
            triplets.push((i, j, half));
            triplets.push((j, i, half));
        }
    }
    // Entry (i,j) and (j,i) receive the same two halves, and float addition
    // is commutative, so the result is exactly symmetric.
    SparseAffinity::from_symmetric_triplets(n, triplets)
}

/// kNN search plus affinity in one call.
pub fn build_graph(x: ArrayView2<f64>, k_nn: usize) -> Result<SparseAffinity> {
    let nb = knn(x, k_nn, Metric::Euclidean)?;
    Ok(affinity(&nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    #[default]
    Unnormalized,
    Symmetric,
    RandomWalk,
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unnormalized" => Ok(Self::Unnormalized),
            "symmetric" => Ok(Self::Symmetric),
            "random_walk" => Ok(Self::RandomWalk),
            other => Err(Error::InvalidArgument(format!("unknown Laplacian variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Unnormalized => "unnormalized",
            Self::Symmetric => "symmetric",
            Self::RandomWalk => "random_walk",
        })
    }
}

/// `L = D - W`, `D^{-1/2} L D^{-1/2}` or `D^{-1} L`, kept in factored form.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    kind: LaplacianKind,
    affinity: SparseAffinity,
    degrees: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn new(affinity: SparseAffinity, kind: LaplacianKind) -> Result<Self> {
        let degrees = affinity.degrees();
        if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedVertex(i));
        }
        Ok(LaplacianMatrix {
            kind,
            affinity,
            degrees,
        })
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn affinity(&self) -> &SparseAffinity {
        &self.affinity
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn n(&self) -> usize {
        self.affinity.n
    }

    /// Sparse product `L Y`.
    pub fn apply(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let n = self.n();
        assert_eq!(y.nrows(), n, "Laplacian product dimension mismatch");
        let k = y.ncols();
        let mut out = Array2::zeros((n, k));
        let inv_sqrt: Vec<f64> = match self.kind {
            LaplacianKind::Symmetric => self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect(),
            _ => Vec::new(),
        };
        for i in 0..n {
            let mut acc = vec![0.0; k];
            for (j, w) in self.affinity.row(i) {
                let scale = match self.kind {
                    LaplacianKind::Symmetric => w * inv_sqrt[j],
                    _ => w,
                };
                for (a, &yj) in acc.iter_mut().zip(y.row(j)) {
                    *a += scale * yj;
                }
            }
            let di = self.degrees[i];
            let mut row = out.row_mut(i);
            for c in 0..k {
                row[c] = match self.kind {
                    LaplacianKind::Unnormalized => di * y[[i, c]] - acc[c],
                    LaplacianKind::Symmetric => y[[i, c]] - acc[c] * inv_sqrt[i],
                    LaplacianKind::RandomWalk => y[[i, c]] - acc[c] / di,
                };
            }
        }
        out
    }

    /// `Tr(Y^T L Y)` for the unnormalized variant evaluated edge-wise as
    /// `1/2 sum_ij W_ij |y_i - y_j|^2`, which is non-negative by construction.
    /// Other variants use `Tr(Y^T (L Y))`.
    pub fn rayleigh_trace(&self, y: ArrayView2<f64>) -> f64 {
        match self.kind {
            LaplacianKind::Unnormalized => {
                let mut s = 0.0;
                for i in 0..self.n() {
                    let yi = y.row(i);
                    for (j, w) in self.affinity.row(i) {
                        let yj = y.row(j);
                        let d2: f64 = yi.iter().zip(yj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                        s += w * d2;
                    }
                }
                0.5 * s
            }
            _ => {
                let ly = self.apply(y);
                (&y * &ly).sum()
            }
        }
    }

    /// Dense matrix; the random-walk variant is not symmetric.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let w = self.affinity.to_dense()?;
        let n = self.n();
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 };
                l[[i, j]] = match self.kind {
                    LaplacianKind::Unnormalized => delta * self.degrees[i] - w[[i, j]],
                    LaplacianKind::Symmetric => {
                        delta - w[[i, j]] / (self.degrees[i] * self.degrees[j]).sqrt()
                    }
                    LaplacianKind::RandomWalk => delta - w[[i, j]] / self.degrees[i],
                };
            }
        }
        Ok(l)
    }

    /// Lower triangle of the symmetric operator whose eigenvectors the oracle
    /// needs (`L` itself, or `L_sym` for the normalized variants), row-major.
    pub(crate) fn symmetric_lower_buffer(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense eigensolver limited to n <= {DENSE_LIMIT}, got {n}"
            )));
        }
        let mut buf = vec![0.0; n * n];
        for i in 0..n {
            match self.kind {
                LaplacianKind::Unnormalized => buf[i * n + i] = self.degrees[i],
                _ => buf[i * n + i] = 1.0,
            }
            for (j, w) in self.affinity.row(i) {
                if j < i {
                    buf[i * n + j] = match self.kind {
                        LaplacianKind::Unnormalized => -w,
                        _ => -w / (self.degrees[i] * self.degrees[j]).sqrt(),
                    };
                }
            }
        }
        Ok(buf)
    }
}

/// Unit-weight path graph on `n` vertices.
pub fn path_graph(n: usize) -> SparseAffinity {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    SparseAffinity::from_edges(n, &edges).expect("valid path")
}

/// Unit-weight complete graph on the given vertex ids (offset by `start`).
pub fn clique_edges(start: usize, size: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..size {
        for j in i + 1..size {
            out.push((start + i, start + j, 1.0));
        }
    }
    out
}
