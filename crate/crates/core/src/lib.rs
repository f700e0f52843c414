// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dataset;
pub mod deep_da;
pub mod error;
pub mod exec;
pub mod features;
pub mod linalg;
pub mod normalize;
pub mod shallow_da;
pub mod svm;

pub use error::{Error, Result};
