//! Graph-network machinery: a reverse-mode tape over dense matrices, MLPs
//! that run both on and off the tape, and the edge/node/global GN blocks.
//!
//! The tape's backward pass emits ordinary tape ops, so gradients are
//! themselves differentiable — Hamiltonian models differentiate through
//! their own force computation during training.

pub mod blocks;
pub mod mlp;
pub mod tape;

pub use blocks::{GraphData, GraphVars};
pub use mlp::{Activation, MlpParams, MlpSpec, MlpVars};
pub use tape::{Tape, Var};
