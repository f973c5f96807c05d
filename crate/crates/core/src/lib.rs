#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod matrix;
pub mod noise;
pub mod output;
pub mod propagate;
pub mod scenarios;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
pub use matrix::Matrix;
