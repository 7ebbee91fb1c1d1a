//! Graph-spectral analysis of point cloud videos and a small spatio-temporal-spectral
//! mixer network trained with hand-written backpropagation.
//!
//! The pipeline per clip is: farthest-point anchors with a grouped displacement encoder,
//! a K-NN graph and Laplacian per frame, the graph Fourier transform of the anchor
//! coordinates, a split of the coefficients into low/mid/high index bands, and
//! band-wise reconstruction. The three reconstructions condition three token streams
//! that are refined independently by per-band attention and mixed by a shared MLP
//! over their channel concatenation.
//!
//! Module map:
//!
//! - [`numerics`]: dense matrices, the Jacobi eigensolver, the seeded RNG.
//! - [`graph`]: K-NN adjacency, degree and Laplacian for one frame.
//! - [`spectral`]: GFT/IGFT, band partition, band rejection, energy spectra.
//! - [`nn`]: layers with exact manual gradients and SGD.
//! - [`model`]: encoder, band tokens, frequency-aware attention, frequency-mixing MLP.
//! - [`data`]: the `PCV1` file format, synthetic generators, dataset directories.
//! - [`train`]: loss, schedule, metrics, training loop and ablation sweeps.
//! - [`gradcheck`]: the finite-difference suite used by tests and the CLI.

pub mod data;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
