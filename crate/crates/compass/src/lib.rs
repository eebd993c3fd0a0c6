//! Evaluation toolkit for small differentiable classifiers.
//!
//! Five assessment surfaces over one model/dataset abstraction: basic
//! classification metrics, seeded dataset mutation, white-box and transfer
//! adversarial attacks, gradient attribution with insertion/deletion
//! faithfulness scoring, and pruning-based neuron analysis. Results
//! aggregate into CSV/JSON reports and an SVG radar comparison.

pub mod tensor;
pub mod tape;
pub mod rng;
pub mod model;
pub mod data;
pub mod metrics;
pub mod attacks;
pub mod attribution;
pub mod pruning;
pub mod report;

pub use model::Model;
pub use tensor::Tensor;
