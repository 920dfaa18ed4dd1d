//! Identification of a straight Dirichlet crack from scattered-field data.
//!
//! The crate covers the full numerical pipeline:
//!
//! - [`specfun`]: Bessel and Hankel functions of order 0 and 1.
//! - [`forward`]: crack geometry, the discretized single-layer operator on the
//!   observation circle, its parameter derivatives and a boundary integral
//!   solver producing test data for several excitations.
//! - [`spectral`]: complex SVD, leading singular subspaces and a Monte-Carlo
//!   harness for the Lipschitz stability constant of parameterized operators.
//! - [`dataset`]: seeded generation and binary storage of training pairs.
//! - [`nn`]: a small tanh perceptron trained with ADAM.
//! - [`inverse`]: three-network recovery of `(theta, a)` and the randomized
//!   evaluation protocol.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod linalg;
pub mod nn;
pub mod specfun;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
