// NaN must fail range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod angle_delay;
pub mod channel;
pub mod config;
pub mod csi;
pub mod egvp;
pub mod error;
pub mod experiment;
pub mod flags;
pub mod harmonic;
pub mod linalg;
pub mod metrics;
pub mod results;
pub mod seeds;

pub use error::{Error, Result};
pub use flags::Flags;
