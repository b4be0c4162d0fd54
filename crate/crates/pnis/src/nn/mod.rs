//! Minimal dense-tensor reverse-mode autodiff engine.
//!
//! Provides exactly the primitives the transformer receiver needs: linear
//! maps, LayerNorm, softmax, scaled dot-product attention, feed-forward
//! blocks, BCE-with-logits, Adam with cosine decay, finite-difference
//! gradient verification, and checkpoint serialization. Everything is f64
//! and single-threaded; all reductions use a fixed summation order so runs
//! are bitwise reproducible.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use graph::{Graph, NodeId};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("closure is nondeterministic: {first} vs {second} at the same point")]
    Nondeterministic { first: f64, second: f64 },
}
