//! Dense `f64` tensors, a reverse-mode differentiation tape and Adam.

mod adjacency;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use adjacency::Adjacency;
pub use gradcheck::{finite_diff_check, finite_diff_report, relative_error, GradCheckReport};
pub use optim::{AdamConfig, AdamState};
pub use tape::{CustomOp, Gradients, Tape, Var, COSINE_EPS};
pub use tensor::Tensor;
