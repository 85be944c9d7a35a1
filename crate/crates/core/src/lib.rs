//! Worst-case robust joint precoder/equalizer design for point-to-point MIMO
//! links whose channel, interference-plus-noise covariance and power-shaping
//! matrices are known only within Frobenius-norm balls.

pub mod error;
pub mod harness;
pub mod json;
pub mod model;
pub mod perfect;
pub mod quartic;
pub mod solver;
pub mod validate;
pub mod worstcase;

pub use error::{Error, Result};
