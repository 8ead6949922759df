//! Reverse-mode automatic differentiation over small static graphs.
//!
//! A [`Graph`] is built once with [`GraphBuilder`], then evaluated any number
//! of times against [`Bindings`] for its leaves. Evaluation state lives in
//! per-call scratch buffers, so a graph can be shared between threads.

mod adam;
mod check;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use check::{finite_diff_check, finite_diff_check_at, FD_STEP};
pub use graph::{Bindings, Graph, GraphBuilder, LeafKind, NodeId, L2_EPS};
pub use tensor::Tensor;
