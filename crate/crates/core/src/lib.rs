// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoy;
pub mod definetti;
pub mod entropy;
pub mod error;
pub mod finite_size;
pub mod linalg;
pub mod lp;
pub mod protocol;
pub mod sdp;
pub mod squasher;
pub mod sweep;

pub use error::{Error, Result};
