//! Dense tensors, a reverse-mode tape, recurrent cells and Adam.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod init;
pub mod params;
pub mod tensor;

pub use adam::AdamState;
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use gru::{GateVars, GateWeights};
pub use params::{BoundParams, GradMap, ParamSet};
pub use tensor::Tensor;
