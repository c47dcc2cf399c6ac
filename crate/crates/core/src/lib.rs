//! Time-domain velocity vector (TDVV) features for first-order Ambisonics.
//!
//! The crate is organised as a small pipeline:
//!
//! * [`foa`] holds the 4-channel signal container and the STFT front-end,
//! * [`velocity`] turns spectra into frequency- and time-domain velocity vectors,
//! * [`noise`] tracks the per-band noise floor used to gate low-SNR bands,
//! * [`estimator`] extracts direction, reflection delay and range per frame and
//!   aggregates them per recording,
//! * [`simulator`] renders floor-reflection scenes with exact ground truth and
//!   provides closed-form velocity-vector oracles,
//! * [`pipeline`] wires everything together for a whole recording.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod foa;
pub mod geom;
pub mod noise;
pub mod pipeline;
pub mod simulator;
pub mod velocity;

pub use error::{Error, Result};
pub use geom::Vec3;
