//! Dense `f64` tensors and a tape-based reverse-mode differentiation engine
//! whose backward pass can itself be recorded, giving gradients of
//! gradient-dependent quantities.

mod array;
mod finite_diff;
mod grad;
pub(crate) mod kernels;
mod ops;
mod tape;
mod tensor;

pub use array::{broadcast_shape, Array};
pub use finite_diff::{finite_diff, relative_error};
pub use grad::backward;
pub use kernels::ConvGeom;
pub use ops::MIN_DIVISOR;
pub use tape::Tape;
pub use tensor::Tensor;
