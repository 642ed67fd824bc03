//! Port-cycling CSI acquisition simulator.
//!
//! The crate covers the full classical pipeline around a Type-II codebook:
//! an oversampled DFT grid of beams ([`beamspace`]), a clustered-ray channel
//! generator ([`channel`]), beam selection and wideband amplitude/phase
//! quantization ([`codebook`]), sub-panel port cycling ([`cycling`]),
//! evaluation metrics ([`metrics`]), a binary dataset format for learned
//! predictors ([`dataset`]) and the `portcycle` command-line front end
//! ([`cli`]).

pub mod beamspace;
pub mod channel;
pub mod cli;
pub mod codebook;
pub mod complexity;
pub mod cycling;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
