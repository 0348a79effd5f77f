//! Neural variational topic models with a differentiable coherence
//! objective, plus the evaluation stack (perplexity, NPMI, embedding-based
//! topic coherence) needed to study them.
//!
//! This crate is the computational core: tensors, reverse-mode autodiff,
//! corpus statistics, model definitions, and the training step. It is
//! `no_std`-compatible (alloc required); file formats and the CLI live in
//! the companion `ntm-cli` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod corpus;
pub mod coherence;
pub mod embeddings;
pub mod graph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use graph::{Activation, Axis, Graph, GraphError, Gradients, NodeId, ReduceOp};
pub use tensor::Tensor;
