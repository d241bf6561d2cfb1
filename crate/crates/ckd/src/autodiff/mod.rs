//! Reverse-mode differentiation kernel.
//!
//! Supplies exactly the primitives the models and losses need, recorded
//! on a [`Tape`] and differentiated by a single reverse sweep, plus a
//! central finite-difference oracle for verifying every analytic
//! gradient independently.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_rel_error, rel_error, REL_ERR_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{bit_identical, Tensor};
