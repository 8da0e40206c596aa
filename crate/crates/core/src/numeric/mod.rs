//! Dense arithmetic, reverse-mode differentiation and finite-difference oracles.

pub mod diff;
pub mod matrix;
pub mod params;
pub mod tape;

pub use diff::{
    central_difference, evaluate, finite_diff_grad, hessian_vector_product, max_relative_error,
    value_and_grad, Objective, DEFAULT_FD_STEP, DEFAULT_HVP_STEP,
};
pub use matrix::{argmax, Matrix};
pub use params::{Gradient, Layout, ParamVector, Segment};
pub use tape::{Tape, Var};
