//! Block Krylov solvers for large Lyapunov equations `A X + X A^T + C C^T = 0`.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arnoldi;
pub mod densela;
pub mod diagnostics;
pub mod error;
pub mod operators;
pub mod restart;
pub mod solvers;

pub use error::{Error, Result};
