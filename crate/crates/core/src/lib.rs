#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod flow;
pub mod io;
pub mod measures;
mod quad;
pub mod runner;
pub mod spectral;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
