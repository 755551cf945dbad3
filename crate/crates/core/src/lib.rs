//! Statistical reconstruction for Poisson transmission tomography.
//!
//! The centerpiece is [`lapvard`], a variational automatic relevance
//! determination solver that places an independent Laplace prior on every
//! orthonormal Haar coefficient of the image and fits a Laplace posterior
//! family to each. The prior scales are re-estimated in closed form every
//! outer iteration, so the sparsity weight is learned from the data instead
//! of being hand-tuned.
//!
//! Supporting modules:
//!
//! - [`projector`]: parallel-beam sparse system matrices and their adjoints.
//! - [`wavelet`]: multilevel orthonormal 2-D Haar transform, fast and explicit.
//! - [`transmission`]: the Poisson transmission likelihood.
//! - [`baselines`]: alternating-minimization comparators (plain, wavelet-L1,
//!   neighborhood-quadratic).
//! - [`simkit`]: ellipse phantoms and reproducible Poisson count simulation.
//! - [`runner`]: experiment configs, metrics, file outputs.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod baselines;
pub mod error;
pub mod lapvard;
pub mod projector;
pub mod report;
pub mod runner;
pub mod simkit;
pub mod transmission;
pub mod wavelet;

mod scalar;

pub use error::{Error, Result};
pub use projector::{GridSpec, Ray, ScanGeometry, SystemMatrix};
pub use report::{IterationRow, SolveReport};
pub use transmission::{Image, Sinogram};
pub use wavelet::{CoefficientVector, WaveletBasis};
