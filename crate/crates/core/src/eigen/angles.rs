use ndarray::{Array1, Array2, ArrayView2};

use super::qr::qr;
use super::symmetric::eig_sym;
use crate::error::{Error, Result};

fn is_orthonormal(a: ArrayView2<f64>, tol: f64) -> bool {
    let g = a.t().dot(&a);
    g.indexed_iter().all(|((i, j), &v)| {
        let target = if i == j { 1.0 } else { 0.0 };
        (v - target).abs() <= tol
    })
}

/// Orthonormal basis of the column span; returns the input untouched when it
/// already is orthonormal within `1e-6`.
pub fn orthonormal_basis(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    if is_orthonormal(a, 1e-6) {
        return Ok(a.to_owned());
    }
    Ok(qr(a)?.q)
}

/// Singular values of a small matrix, descending.
fn singular_values(m: &Array2<f64>) -> Result<Array1<f64>> {
    let gram = m.t().dot(m);
    let e = eig_sym(&gram)?;
    let mut s: Vec<f64> = e.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(Array1::from_vec(s))
}

/// Principal angles between the column spans of two n×k matrices, ascending.
///
/// Angles come from the cosines (singular values of `A^T B`) when they are
/// large and from the sines (singular values of `B - A A^T B`) when they are
/// small, so both ends of `[0, pi/2]` stay accurate.
pub fn principal_angles(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array1<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal shapes, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let k = qa.ncols();
    let cross = qa.t().dot(&qb);
    let cosines = singular_values(&cross)?;
    let residual = &qb - &qa.dot(&cross);
    let mut sines = singular_values(&residual)?;
    // Descending sines pair with ascending cosines; reverse to ascending.
    sines.as_slice_mut().unwrap().reverse();

    let mut angles = Vec::with_capacity(k);
    for i in 0..k {
        let c = cosines[i].clamp(0.0, 1.0);
        let theta = if c * c < 0.5 {
            c.acos()
        } else {
            sines[i].clamp(0.0, 1.0).asin()
        };
        angles.push(theta);
    }
    angles.sort_by(|x, y| x.total_cmp(y));
    Ok(Array1::from_vec(angles))
}
