#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod benchgen;
pub mod cloud;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod matching;
pub mod p2p;
pub mod seed;

pub use error::{Error, Result};
