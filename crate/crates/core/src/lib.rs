//! Reconstruction on d-ary trees under a two-category symmetric channel.
//!
//! A root state among `2q` states (two categories of `q`) is broadcast down
//! a d-ary tree. The crate provides exact enumeration of the root posterior
//! moments, Monte Carlo and population-dynamics estimates of the same
//! moments, closed-form moment relations and small-moment expansions, and
//! the truncated two-dimensional map that governs the moments near the
//! uniform fixed point.
//!
//! States are numbered from 0: category A is `0..q`, category B is `q..2q`.
//! Every moment is conditioned on root state 0.

pub mod broadcast;
pub mod channel;
pub mod dynsys;
pub mod error;
pub mod exact;
pub mod formulas;
pub mod moments;
pub mod output;
pub mod popdyn;
pub mod rng;

pub use error::{Error, Result};
