//! Dense linear algebra: symmetric eigensolvers, QR, principal angles and the
//! Laplacian eigenvector oracle.

pub mod angles;
pub mod oracle;
pub mod qr;
pub mod symmetric;

pub use angles::{orthonormal_basis, principal_angles};
pub use oracle::{laplacian_eigenpairs, spectral_oracle, SpectralResult, DEGENERATE_GAP};
pub use qr::{qr, upper_triangular_inverse, Qr};
pub use symmetric::{eig_sym, eig_sym_lowest, normalize_signs, PartialEigen, SymEigen};
