#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fp;
pub mod grid;
pub mod initial;
pub mod kernel;
pub mod mc;
pub mod network;
pub mod params;
pub mod stationary;

pub use error::{Error, Result};
