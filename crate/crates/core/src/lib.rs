//! Models of a varactor-loaded nonlinear ring resonator used as a bidirectional
//! frequency divider/doubler, plus the multipath ranging study that motivates it.

pub mod circuit;
pub mod coupler;
pub mod error;
pub mod localization;
pub mod parametric;
pub mod smallsignal;
pub mod transient;

pub use error::{Error, Result};
