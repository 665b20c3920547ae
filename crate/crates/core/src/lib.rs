//! Exact simulation of the continuum gossip process on a flat torus, its
//! branching-process approximation, and the statistics used to check the
//! conditional central limit theorem for the informed volume.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cmj;
pub mod error;
pub mod experiment;
pub mod gossip;
pub mod laplace;
pub mod par;
pub mod rng;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
