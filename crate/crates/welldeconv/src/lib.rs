//! Bayesian well-test deconvolution.

pub mod bessel;
pub mod channel;
pub mod cli;
pub mod convolution;
pub mod laplace;
pub mod posterior;
pub mod reservoir;
pub mod sampler;
pub mod selection;

pub mod par;

mod error;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
