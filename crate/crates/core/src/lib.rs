//! Epidemic monitoring from event-count time series.
//!
//! The crate has three layers that can be used independently:
//!
//! * a forward model: age-structured latent/infectious transport dynamics
//!   ([`pde`]) and the matching growth-rate solver with projective-metric
//!   approximation bounds ([`spectral`]);
//! * trend extraction: segmented log-linear fits and min-of-lines envelopes
//!   ([`segfit`]) on top of count-series handling ([`series`]);
//! * decision support: calibrated slope inference, doubling-time intervals,
//!   and a graded warning/alarm scheme ([`alarm`]).
//!
//! Supporting modules: scenario configs ([`scenario`]), special functions
//! ([`special`]), synthetic data ([`synth`]), and plot rendering ([`svg`]).

pub mod alarm;
pub mod error;
pub mod pde;
pub mod scenario;
pub mod segfit;
pub mod series;
pub mod special;
pub mod spectral;
pub mod svg;
pub mod synth;

pub use alarm::doubling_time;
pub use error::{Error, Result};
