//! Chebyshev graph filters with Gibbs damping, a spectral oracle, a scalar
//! approximation workbench and the ChebGibbsNet node classifier.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod data;
pub mod error;
pub mod filters;
pub mod graph;
pub mod model;
pub mod nn;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
