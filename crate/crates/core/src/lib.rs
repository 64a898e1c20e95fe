//! Numerical laboratory for convolution powers of finitely supported
//! complex-valued functions on the integer lattice.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: sparse lattice functions, direct and FFT convolution powers.
//! * [`spectral`]: characteristic functions, maximizer search, and the
//!   logarithmic expansion about a maximizer.
//! * [`homogeneity`]: exponent matrices, semi-elliptic normal form, and the
//!   classification of an expansion into drift, principal part and remainder.
//! * [`legendre`]: Legendre-Fenchel transforms of the principal real part.
//! * [`attractor`]: heat-kernel attractors and Fourier inversion.
//! * [`bounds`]: envelopes, constant fitting and decay-rate regression.
//! * [`pipeline`]: the end-to-end analysis used by the command-line tool.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod bounds;
pub mod builtins;
pub mod cjson;
pub mod error;
pub mod homogeneity;
pub mod lattice;
pub mod legendre;
pub mod pipeline;
pub mod quadrature;
pub mod sampling;
pub mod series;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Default seed for every randomized sampler.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;
