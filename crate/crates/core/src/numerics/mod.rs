//! Dense tensors, a reverse-mode tape, Adam, and finite-difference checks.

mod adam;
mod gradcheck;
pub mod ops;
mod parameter;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, GradCheckReport, ParameterCheck};
pub use ops::{activation, affine, argmax, concat, loss_eval, Activation, LossKind, PROB_EPS};
pub use parameter::{checksum, Parameter, Parameterized};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
