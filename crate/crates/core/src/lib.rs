//! Similarity-based diversity scores of arbitrary order.
//!
//! The Vendi score of order `q` is the exponential of the order-`q` Rényi
//! entropy of the eigenvalues of a trace-normalized similarity matrix. For
//! collections of identical-or-unrelated items it reduces exactly to the
//! Hill number of the item multiplicities.
//!
//! Modules:
//! - [`kernels`]: similarity functions, kernel matrices, kernel gradients
//! - [`spectrum`]: normalization, clamped spectra, Rayleigh-Ritz projection
//! - [`scores`]: Hill numbers and Vendi scores
//! - [`grad`]: gradients of `log VS_q` and the Vendi force
//! - [`sampler`]: annealed Vendi-force Langevin dynamics on a 2D double well
//! - [`scenarios`]: the shape-color benchmark collections

pub mod error;
pub mod grad;
pub mod kernels;
pub mod sampler;
pub mod scenarios;
pub mod scores;
pub mod spectrum;

pub use error::{Error, Result};
pub use kernels::{Color, Item, Kernel, Shape, ShapeColor};
pub use scores::{hill_number, renyi_exponential, vendi_score, Method, Order, ScoreReport};
pub use spectrum::{KernelMatrix, NormalizedKernel, Spectrum, DEFAULT_SUPPORT_TOL};
