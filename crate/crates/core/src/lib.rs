//! Contraction rates of consensus dynamics on the nonnegative orthant and on
//! the cone of positive semidefinite Hermitian matrices.
//!
//! The crate covers Dobrushin-type ergodicity coefficients of stochastic
//! matrices and unital quantum channels, Hopf oscillation operator norms,
//! flow rates `h(.)` of linear and nonlinear consensus flows, Hilbert metric
//! rates, and simulators that check the resulting exponential bounds.

pub mod coefficients;
pub mod cone;
pub mod error;
pub mod flows;
pub mod linalg;
pub mod markov;
pub mod quantum;
pub mod sampling;
pub mod trajectory;

#[cfg(test)]
mod testutil;

pub use cone::{ConeElement, ConeTag, HermitianMatrix, RealVector};
pub use error::{Error, Result};
