//! Dense row-major matrices, a cyclic Jacobi eigensolver for symmetric matrices, and the
//! seeded random number generator used by every stochastic component.

mod eigen;
pub(crate) mod kernels;
mod matrix;
mod rng;

pub use eigen::{symmetric_eigen, EigenDecomposition, DEFAULT_EIGEN_TOL, MAX_SWEEPS};
pub use matrix::{matmul, Matrix};
pub use rng::Rng;
