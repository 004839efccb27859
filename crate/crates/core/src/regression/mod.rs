//! Linear-regression Monte Carlo: an exhaustive specification search against
//! a two-candidate expert when covariates are released with Gaussian noise.

mod lab;
mod ols;

pub use lab::*;
pub use ols::ols_r2;
