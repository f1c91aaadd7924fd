#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod config;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod hydro;
pub mod kinetic;
pub mod output;
pub mod study;
pub mod weight;

pub use error::{Error, Result};
