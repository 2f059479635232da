#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod kalman;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod ssgpfa;

pub use error::{Error, Result};
