use ndarray::{s, Array1, Array2};

use super::symmetric::{eig_lower_packed_lowest, normalize_signs};
use crate::error::{Error, Result};
use crate::graph::{LaplacianKind, LaplacianMatrix};

/// Gap below which two consecutive eigenvalues count as one cluster.
pub const DEGENERATE_GAP: f64 = 1e-10;

/// Eigenvector columns with ascending eigenvalues.
///
/// Columns are unit norm. For the unnormalized and symmetric Laplacians they
/// are orthonormal; random-walk eigenvectors are only `D`-orthogonal.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub vectors: Array2<f64>,
    pub values: Array1<f64>,
    /// Whether column 0 is the trivial (constant / `D^{1/2} 1`) eigenvector.
    pub includes_trivial: bool,
    pub variant: LaplacianKind,
    /// Set when the last returned eigenvalue is within [`DEGENERATE_GAP`] of
    /// the next one, i.e. the returned subspace is not uniquely defined.
    pub near_degenerate: bool,
}

impl SpectralResult {
    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }
}

/// The `count` smallest eigenpairs of `l`, trivial pair included.
pub fn laplacian_eigenpairs(l: &LaplacianMatrix, count: usize) -> Result<SpectralResult> {
    let n = l.n();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= count <= n, got count={count}, n={n}"
        )));
    }
    let buf = l.symmetric_lower_buffer()?;
    let want = (count + 1).min(n);
    let part = eig_lower_packed_lowest(buf, n, want)?;
    let near_degenerate =
        count < n && (part.spectrum[count] - part.spectrum[count - 1]).abs() < DEGENERATE_GAP;

    let mut vectors = part.vectors.slice(s![.., ..count]).to_owned();
    if l.kind() == LaplacianKind::RandomWalk {
        // L_rw v = λ v  <=>  L_sym (D^{1/2} v) = λ (D^{1/2} v).
        for (i, d) in l.degrees().iter().enumerate() {
            let scale = 1.0 / d.sqrt();
            vectors.row_mut(i).mapv_inplace(|v| v * scale);
        }
        for mut col in vectors.columns_mut() {
            let norm = col.dot(&col).sqrt();
            col.mapv_inplace(|v| v / norm);
        }
    }
    normalize_signs(&mut vectors);
    Ok(SpectralResult {
        vectors,
        values: part.values.slice(s![..count]).to_owned(),
        includes_trivial: true,
        variant: l.kind(),
        near_degenerate,
    })
}

/// Eigenvectors `2..=k+1` of `l`: the first `k` nontrivial eigenpairs.
pub fn spectral_oracle(l: &LaplacianMatrix, k: usize) -> Result<SpectralResult> {
    if k == 0 || k + 1 > l.n() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k and k+1 <= n, got k={k}, n={}",
            l.n()
        )));
    }
    let full = laplacian_eigenpairs(l, k + 1)?;
    Ok(SpectralResult {
        vectors: full.vectors.slice(s![.., 1..]).to_owned(),
        values: full.values.slice(s![1..]).to_owned(),
        includes_trivial: false,
        variant: full.variant,
        near_degenerate: full.near_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::eig_sym;
    use crate::graph::{build_graph, clique_edges, SparseAffinity};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, seed: u64) -> LaplacianMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
        LaplacianMatrix::new(build_graph(x.view(), 8).unwrap(), LaplacianKind::Unnormalized)
            .unwrap()
    }

    #[test]
    fn disjoint_cliques_have_zero_fiedler_value() {
        let mut edges = clique_edges(0, 6);
        edges.extend(clique_edges(6, 6));
        let w = SparseAffinity::from_edges(12, &edges).unwrap();
        let l = LaplacianMatrix::new(w, LaplacianKind::Unnormalized).unwrap();
        let r = spectral_oracle(&l, 1).unwrap();
        assert!(r.values[0].abs() < 1e-10);
        // Any null vector is constant on each clique.
        let v = r.vectors.column(0);
        for i in 1..6 {
            assert!((v[i] - v[0]).abs() < 1e-8);
            assert!((v[6 + i] - v[6]).abs() < 1e-8);
        }
    }

    #[test]
    fn connected_graph_has_positive_fiedler_value() {
        let l = cloud(120, 1);
        assert_eq!(l.affinity().components().0, 1);
        let r = spectral_oracle(&l, 1).unwrap();
        assert!(r.values[0] > 1e-8);
        assert!(!r.includes_trivial);
    }

    #[test]
    fn rayleigh_quotient_equals_eigenvalue_sum() {
        let l = cloud(150, 2);
        let r = spectral_oracle(&l, 4).unwrap();
        let rq = l.rayleigh_trace(r.vectors.view());
        let sum = r.values.sum();
        assert!((rq - sum).abs() <= 1e-8 * sum.max(1.0), "{rq} vs {sum}");
        let gram = r.vectors.t().dot(&r.vectors);
        assert!((&gram - &Array2::<f64>::eye(4)).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn agrees_with_full_decomposition() {
        let l = cloud(90, 3);
        let full = eig_sym(&l.to_dense().unwrap()).unwrap();
        let r = laplacian_eigenpairs(&l, 4).unwrap();
        for j in 0..4 {
            assert!((r.values[j] - full.values[j]).abs() < 1e-10);
            let dot: f64 = r.vectors.column(j).dot(&full.vectors.column(j));
            assert!((dot.abs() - 1.0).abs() < 1e-8);
        }
        assert!(r.values[0].abs() < 1e-10);
    }

    #[test]
    fn random_walk_vectors_satisfy_eigen_equation() {
        let l_un = cloud(100, 4);
        let l = LaplacianMatrix::new(l_un.affinity().clone(), LaplacianKind::RandomWalk).unwrap();
        let r = spectral_oracle(&l, 3).unwrap();
        let ly = l.apply(r.vectors.view());
        for j in 0..3 {
            let res = &ly.column(j) - &(&r.vectors.column(j) * r.values[j]);
            assert!(res.iter().all(|v| v.abs() < 1e-9));
            assert!((r.vectors.column(j).dot(&r.vectors.column(j)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cluster_is_flagged() {
        // Three disjoint triangles: the zero eigenvalue has multiplicity 3,
        // so the first nontrivial vector is not unique.
        let mut edges = clique_edges(0, 3);
        edges.extend(clique_edges(3, 3));
        edges.extend(clique_edges(6, 3));
        let w = SparseAffinity::from_edges(9, &edges).unwrap();
        let l = LaplacianMatrix::new(w, LaplacianKind::Unnormalized).unwrap();
        assert!(spectral_oracle(&l, 1).unwrap().near_degenerate);
        assert!(!spectral_oracle(&l, 2).unwrap().near_degenerate);
    }
}
