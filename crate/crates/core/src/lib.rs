// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod droplet;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod manifold;
pub mod noise;
pub mod spde;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
