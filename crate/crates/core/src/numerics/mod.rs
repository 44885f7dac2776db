//! Minimal dense linear algebra, multilayer-perceptron forward/backward
//! passes, cross-entropy loss, and SGD with momentum, weight decay and a
//! milestone learning-rate schedule.
//!
//! Everything is 64-bit and value-semantic: models are plain structs,
//! gradients mirror parameter shapes, and identical inputs produce
//! bit-identical outputs within a build.

mod graph;
mod io;
mod loss;
mod matrix;
mod mlp;
mod sgd;

pub use graph::{Graph, NodeId};
pub use io::{load_model, save_model, ModelRole};
pub use loss::cross_entropy;
pub use matrix::Matrix;
pub use mlp::{mlp_backward, mlp_forward, Activation, GradientTape, Layer, MlpModel, ModelGrads};
pub use sgd::{sgd_step, SgdConfig, SgdState};
