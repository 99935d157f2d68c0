//! Detection of planted community structure in sets of feature vectors.
//!
//! Feature vectors are placed on the variable nodes of a quasi-cyclic LDPC
//! Tanner graph, edges receive random-bond Ising couplings calibrated at the
//! Nishimori temperature, and the low end of the Bethe-Hessian spectrum is
//! inspected for an isolated eigenvalue. A large primary gap marks a set with
//! planted (real-data) structure; its absence marks a synthetic set.
//!
//! Module map:
//!
//! - [`qc_graph`]: exponent matrices, circulant lifting, girth, projection
//!   onto an image graph.
//! - [`rbim`]: couplings, Nishimori temperature estimators, calibration.
//! - [`features`]: feature ingestion, top-k selection, projection to 32 dims.
//! - [`spectral`]: Bethe-Hessian operators, eigensolvers, spectral gaps.
//! - [`detect`]: the end-to-end pipeline and decision rule.
//! - [`planted`]: ground-truth generators used as oracles.
//! - [`cli`]: the command-line surface.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detect;
pub mod digest;
mod error;
pub mod features;
pub mod planted;
pub mod qc_graph;
pub mod rbim;
pub mod spectral;

pub use error::{Error, Result};
