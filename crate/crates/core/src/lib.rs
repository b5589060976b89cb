//! Baseband simulator for a single-antenna full-duplex transceiver.
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canceller;
pub mod channel;
pub mod digital_sic;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod service;
pub mod signal;
pub mod spectral;
pub mod spi;
pub mod waveforms;

pub use error::{Error, Result};
