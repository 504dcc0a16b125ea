//! Minimal reverse-mode automatic differentiation over real matrices.

mod complex;
pub mod gradcheck;
pub mod linalg;
mod tape;
mod tensor;

pub use complex::{CMat, Complex64, ComplexMatrix};
pub use tape::{Gradients, Tape};
pub use tensor::{NodeId, Tensor};
