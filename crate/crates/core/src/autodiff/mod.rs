//! Reverse-mode automatic differentiation over matrix-valued primitives.

mod adam;
mod gradcheck;
mod graph;
mod kernels;
mod tape;

pub use adam::{clip_global_norm, global_norm, AdamConfig, ParamStore};
pub use gradcheck::{grad_check, GradCheck, GRAD_FLOOR};
pub use graph::{Eval, EvalVar, Graph, Precision};
pub use kernels::{softmax_rows, AttentionSpec};
pub use tape::{Gradients, Tape, Var};
