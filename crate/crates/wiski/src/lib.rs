//! Streaming Gaussian-process engine with constant-time online updates.
//!
//! The core idea: approximate the kernel matrix through structured kernel
//! interpolation (a sparse cubic interpolation matrix W onto a regular grid of
//! inducing points with Kronecker-of-Toeplitz covariance), then reformulate the
//! marginal log-likelihood, posterior, and conditioning through the Woodbury
//! identity so every update touches only fixed-size caches: W'y, y'y, and a
//! low-rank root of W'W. Conditioning on a new observation, evaluating the
//! marginal log-likelihood, and stepping hyperparameters all cost O(m^2) in the
//! number of inducing points and O(1) in the number of observed points.
//!
//! The crate also ships a dense exact-GP oracle used for verification and as a
//! timing baseline, plus streaming experiment drivers (online regression and
//! classification, Bayesian optimization, active learning, and a timing
//! benchmark).
//!
//! All numeric code is generic over the scalar type (f32 or f64) through the
//! [`scalar::Scalar`] trait; concrete aliases for the common f64 instantiation
//! are exported at the crate root.

pub mod error;
pub mod exact;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod loops;
pub mod model;
pub mod opt;
pub mod posterior;
pub mod scalar;

pub use error::{Error, Result};
pub use posterior::PosteriorGaussian;

/// Default working precision for the drivers and the CLI.
pub type Real = f64;

pub type GridF64 = grid::Grid<f64>;
pub type GridF32 = grid::Grid<f32>;
pub type KernelParamsF64 = kernels::KernelParams<f64>;
pub type KernelParamsF32 = kernels::KernelParams<f32>;
pub type WiskiStateF64 = model::WiskiState<f64>;
pub type WiskiStateF32 = model::WiskiState<f32>;
pub type ExactGpF64 = exact::ExactGp<f64>;
pub type PosteriorF64 = posterior::PosteriorGaussian<f64>;
