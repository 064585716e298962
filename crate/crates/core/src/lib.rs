//! Arterial pulse-pressure and blood-pressure waveform reconstruction from
//! three-channel ultrasound RF echo frames.
//!
//! The crate is organized by processing stage:
//!
//! - [`signal`]: envelope, spline interpolation, zero-phase filtering,
//!   resampling and second-derivative landmarks.
//! - [`rf`]: RF frame stream types and the `UPRF` binary format.
//! - [`phantom`]: a synthetic elastic-tube phantom that produces RF streams
//!   together with ground truth.
//! - [`wall`]: wall identification, SNR gating and cross-correlation wall
//!   tracking.
//! - [`pwv`]: two-stage local pulse wave velocity estimation.
//! - [`pressure`]: diameter-to-pressure conversion and beat metrics.
//! - [`pipeline`]: streaming orchestration and evaluation statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod phantom;
pub mod pipeline;
pub mod pressure;
pub mod pwv;
pub mod rf;
pub mod signal;
pub mod wall;

pub use error::{Error, Result};
