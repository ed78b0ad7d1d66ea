//! Kernel-regime self-supervised representation learning.
//!
//! The crate is organised around five modules:
//!
//! - [`kernelspace`]: kernels, Gram matrices, Nyström features and
//!   activation-induced dot-product functions.
//! - [`spectral_pretrain`]: empirical invariance and kernel operators and the
//!   closed-form regularised representation.
//! - [`sgd_pretrain`]: projected stochastic gradient descent over PSD
//!   matrices in an explicit feature space.
//! - [`analytic_spectra`]: closed-form eigenvalues of augmentation and
//!   architecture operators on the Boolean hypercube and the sphere, with
//!   brute-force operator oracles.
//! - [`downstream_probe`]: ridge probes, excess risk and effective dimension.
//!
//! Variants (kernels, augmentation laws, activations, step schedules) are
//! looked up by name through [`registry::Registry`].

pub mod analytic_spectra;
pub mod downstream_probe;
pub mod error;
pub mod kernelspace;
pub mod linalg;
pub mod registry;
pub mod sgd_pretrain;
pub mod spectral_pretrain;

pub use error::{Error, Result};
