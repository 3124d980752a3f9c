#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod error;
pub mod geometry;
pub mod io;
pub mod poly;
pub mod polysolve;
pub mod ransac;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
