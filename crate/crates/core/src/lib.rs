//! Hierarchical graph networks for learning N-body dynamics, plus the
//! ground-truth simulator, training loop and tooling around them.

pub mod error;
pub mod gn;
pub mod hierarchy;
pub mod io;
pub mod models;
pub mod rng;
pub mod train;
pub mod sim;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
