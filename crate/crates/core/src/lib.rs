//! Simulation and analysis of a two-level emitter driven by a periodic
//! π-pulse train.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fitkit;
pub mod params;
pub mod pulse;
pub mod spectra;
pub mod state;
pub mod tracemodel;
pub mod units;

pub use dynamics::{evolve, step, Drive, TimeGrid, Trajectory};
pub use error::{Error, Result};
pub use params::{DetuningModel, EmitterParams, Sampling};
pub use pulse::{calibrate_pulse_amplitude, pulse_envelope, PulseSequence};
pub use state::DensityMatrix;
