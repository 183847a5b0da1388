//! Subordinated Brownian motion: exponents, Levy densities, the symmetry
//! criterion, European pricing, put-call duality, complete monotonicity and
//! Monte Carlo simulation.

// Negated comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod charfn;
pub mod cli;
pub mod density;
pub mod error;
pub mod mc;
pub mod models;
pub mod pricing;
pub mod quad;

pub use error::{Error, Result};
