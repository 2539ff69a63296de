//! Minimal dense-array math with analytic gradients.
//!
//! Everything runs on 64-bit floats with a fixed left-to-right summation
//! order, so identical inputs produce bit-identical outputs. Gradients are
//! computed by replaying a recorded op tape in reverse; the
//! [`finite_diff_check`] oracle validates every analytic rule against central
//! differences.

mod gradcheck;
pub(crate) mod matrix;
pub(crate) mod tape;

pub use gradcheck::finite_diff_check;
pub use matrix::{matmul, Matrix};
pub use tape::{cross_entropy_value, softmax_masked, NodeId, Tape};
