//! Spectral embeddings learned by a neural network.
//!
//! The pipeline builds a kNN graph on minibatches, trains a multilayer
//! perceptron whose output layer keeps batch outputs orthonormal while the
//! Rayleigh quotient of the batch Laplacian is minimized, and finally rotates
//! the learned subspace onto individual eigenvectors. Everything needed to
//! validate that pipeline (a dense eigensolver oracle, subspace metrics,
//! synthetic datasets) lives here as well.

pub mod apps;
pub mod data;
pub mod eigen;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod numap;
pub mod specnet;

pub use data::{Dataset, SplitPair, SyntheticKind};
pub use eigen::SpectralResult;
pub use error::{Error, ErrorKind, Result};
pub use graph::{LaplacianKind, LaplacianMatrix, NeighborLists, SparseAffinity};
pub use nn::Mlp;
pub use numap::{NumapConfig, NumapModel};
pub use specnet::{SepSpectralModel, TrainConfig};
