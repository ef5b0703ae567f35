//! Likelihood inference for extreme-phenotype-sampling (EPS) genetic
//! association studies.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerical
//! code: scalar distributions and a quasi-Newton maximizer ([`stats`]), the
//! data model ([`model`]), the truncated-normal EPS-only likelihood
//! ([`eps_only`]), the dichotomized logistic baseline ([`binary`]), the
//! missing-genotype mixture likelihood for EPS-full samples ([`eps_full`]),
//! ordinary linear regression for complete samples ([`linreg`]) and the
//! simulation models and sampling designs used in power studies ([`sim`]).
//!
//! File formats, the parallel Monte Carlo driver and the command-line front
//! end live in the `eps-assoc` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod binary;
pub mod eps_full;
pub mod eps_only;
pub mod error;
pub mod linalg;
pub mod linreg;
pub mod model;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
