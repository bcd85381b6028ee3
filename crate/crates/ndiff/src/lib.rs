//! Minimal reverse-mode automatic differentiation over dense real arrays.
//!
//! This crate is the numerical substrate for the field models: a tape that
//! records array operations during the forward pass and replays them in
//! reverse, sine-activated MLPs whose weights may themselves be tape nodes
//! (so hypernetwork-generated parameters stay differentiable), the Adam
//! optimizer, a cosine learning-rate schedule, and a binary checkpoint
//! container.
//!
//! Everything is generic over the scalar type: production paths run in
//! `f32`, while gradient-verification tests instantiate the exact same
//! code at `f64` so central finite differences are meaningful.

pub mod adam;
pub mod array;
pub mod checkpoint;
mod error;
pub mod hyper;
pub mod kernels;
pub mod nn;
pub mod real;
pub mod rng;
pub mod schedule;
pub mod tape;

pub use adam::Adam;
pub use array::DenseArray;
pub use checkpoint::Checkpoint;
pub use error::{NdiffError, Result};
pub use hyper::{hypernet_forward_tape, GeneratedMlp, HyperNetNodes, HyperNetParams, HyperNetSpec};
pub use nn::{mlp_forward_tape, mlp_input_gradient_tape, MlpNodes, MlpParams, MlpSpec};
pub use real::Real;
pub use schedule::cosine_lr;
pub use tape::{Gradients, NodeId, Tape};
