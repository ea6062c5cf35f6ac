//! Adaptive pointwise estimation of conditional-heteroscedasticity models.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod calibration;
pub mod changepoint;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod io;
pub mod likelihood;
pub mod mle;
mod optim;
pub mod schedule;
pub mod seed;
pub mod simulate;
pub mod volmodel;

pub use error::{Error, Result};
