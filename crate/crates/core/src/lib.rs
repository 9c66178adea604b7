//! Linear-optics model of a detector-device-independent QKD receiver, the
//! detector side-channel attacks against it, and a protocol simulator.

// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod attacks;
pub mod detectors;
pub mod error;
pub mod optics;
pub mod protocol;
pub mod receiver;
pub mod sifting;
pub mod verify;

pub use error::{Error, Result};
