//! Noise-robust text-to-speech built on self-supervised speech representations.
//!
//! The crate chains a text-to-representation acoustic model with a
//! representation-to-waveform GAN vocoder, plus the data preparation
//! (SNR-targeted noise mixing, enhancement, representation caching) and
//! evaluation machinery around them.

pub mod acoustic;
pub(crate) mod binfmt;
pub mod checkpoint;
pub mod enhancement;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod representation;
pub mod signal;
pub(crate) mod tool;
pub mod vocoder;

pub use error::{Error, ErrorKind, Result};
