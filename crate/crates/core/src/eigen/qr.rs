use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Thin QR factorization `Y = Q R` with `Q` m×p orthonormal and `R` p×p upper
/// triangular with a positive diagonal.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: Array2<f64>,
    pub r: Array2<f64>,
}

/// Householder QR. Fails when a diagonal entry of `R` drops below
/// `1e-12 * ||Y||_F`.
pub fn qr(y: ArrayView2<f64>) -> Result<Qr> {
    let (m, p) = y.dim();
    if m < p {
        return Err(Error::InvalidArgument(format!(
            "qr needs at least as many rows as columns, got {m}x{p}"
        )));
    }
    let fro = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !fro.is_finite() {
        return Err(Error::NonFinite("qr input".into()));
    }

    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| y.column(j).to_vec()).collect();
    let mut reflectors: Vec<(f64, Vec<f64>)> = Vec::with_capacity(p);
    let mut r = Array2::<f64>::zeros((p, p));

    for j in 0..p {
        let (head, tail) = cols.split_at_mut(j + 1);
        let x = &mut head[j][j..];
        let alpha = x[0];
        let xnorm = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let (tau, beta, v) = if xnorm == 0.0 {
            let mut v = vec![0.0; x.len()];
            v[0] = 1.0;
            (0.0, alpha, v)
        } else {
            let beta = -alpha.signum() * alpha.hypot(xnorm);
            let scal = 1.0 / (alpha - beta);
            let mut v: Vec<f64> = x.iter().map(|&t| t * scal).collect();
            v[0] = 1.0;
            ((beta - alpha) / beta, beta, v)
        };
        r[[j, j]] = beta;
        for (k, col) in tail.iter_mut().enumerate() {
            let c = &mut col[j..];
            let s = tau * c.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            for (ci, vi) in c.iter_mut().zip(&v) {
                *ci -= s * vi;
            }
            r[[j, j + 1 + k]] = c[0];
        }
        reflectors.push((tau, v));
    }

    for j in 0..p {
        if r[[j, j]].abs() < 1e-12 * fro || fro == 0.0 {
            return Err(Error::RankDeficient(format!(
                "|R[{j},{j}]| = {:e} with ||Y||_F = {:e}",
                r[[j, j]].abs(),
                fro
            )));
        }
    }

    // Q = H_0 H_1 ... H_{p-1} applied to the first p columns of the identity.
    let mut q = Array2::<f64>::zeros((m, p));
    for c in 0..p {
        let mut e = vec![0.0; m];
        e[c] = 1.0;
        for (j, (tau, v)) in reflectors.iter().enumerate().rev() {
            let seg = &mut e[j..];
            let s = tau * seg.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            for (a, b) in seg.iter_mut().zip(v) {
                *a -= s * b;
            }
        }
        for (row, val) in e.into_iter().enumerate() {
            q[[row, c]] = val;
        }
    }

    for j in 0..p {
        if r[[j, j]] < 0.0 {
            r.row_mut(j).mapv_inplace(|v| -v);
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok(Qr { q, r })
}

/// Inverse of an upper-triangular matrix by back substitution.
pub fn upper_triangular_inverse(r: &Array2<f64>) -> Result<Array2<f64>> {
    let p = r.nrows();
    let mut inv = Array2::<f64>::zeros((p, p));
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in i + 1..=c {
                s -= r[[i, k]] * inv[[k, c]];
            }
            if r[[i, i]] == 0.0 {
                return Err(Error::RankDeficient("zero on triangular diagonal".into()));
            }
            inv[[i, c]] = s / r[[i, i]];
        }
    }
    Ok(inv)
}
