// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model_sets;
pub mod pgd;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
