//! Scalar reverse-mode autodiff, the MLP generator and its optimizers.

mod nn;
mod optim;
mod tape;

pub use nn::{Activation, BoundParams, Generator, Layer};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::sigmoid as tape_sigmoid;
