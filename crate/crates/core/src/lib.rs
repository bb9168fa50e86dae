//! Coherent dual-polarization WDM transmission simulator and digital
//! backpropagation (DBP) toolkit.
//!
//! The crate is organized bottom-up:
//!
//! * [`signal`]: sampled dual-polarization signals and spectral primitives.
//! * [`txrx`]: 64-QAM transmitter, WDM multiplexer and receiver front-end.
//! * [`channel`]: forward split-step propagation over amplified fiber spans.
//! * [`dbp`]: the backpropagation equalizers (GVD, SSFM, OSSFM, ESSFM and the
//!   coupled-channel ESSFM) plus the complexity model.
//! * [`optimizer`]: numerical training of the filter coefficients.
//! * [`metrics`]: GMI, NMSE and launch power sweeps.
//! * [`experiment`]: end-to-end pipelines, config, and file formats used by
//!   the command line front-end.

pub mod channel;
pub mod dbp;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod metrics;
pub mod optimizer;
pub mod qam;
pub mod rng;
pub mod signal;
pub mod txrx;

pub use error::{Error, Result};
pub use num_complex::Complex64;
