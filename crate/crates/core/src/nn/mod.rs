//! Multilayer-perceptron forward/backward passes, Adam, and a
//! finite-difference gradient oracle.
//!
//! Backpropagation is hand-derived for the fixed dense-layer structure; there
//! is no general autodiff here and none is needed.

mod adam;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_diff_grad, grad_rel_error};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, MlpParams};
