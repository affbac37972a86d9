//! Dense linear algebra, seeded random generation and spectral radius control.

mod matrix;
mod rng;
mod spectral;

pub use matrix::{matmul, outer, Matrix, Vector};
pub(crate) use matrix::{gemm_into, MatRef};
pub use rng::{rng_matrix, SeededRng, WeightDist};
pub use spectral::{scale_to_radius, spectral_radius, SpectralEstimate, DEFAULT_MAX_ITERS, DEFAULT_TOL};
