//! Closed-set speaker identification for emotional speech.
//!
//! The pipeline turns 16 kHz mono audio into two observation streams: a
//! frame-rate stream of 16 log frequency power coefficients and a coarser
//! block-rate stream of prosodic vectors. Each registered speaker owns an
//! ergodic Gaussian-mixture HMM for each stream, and identification picks
//! the speaker maximizing a convex combination of the two log posteriors.
//!
//! Modules follow the data flow:
//!
//! - [`corpus`]: manifests, WAV and feature-file IO, synthetic corpora
//! - [`dsp`]: framing, Hamming window, power spectrum, log filter bank, LFPCs
//! - [`prosody`]: pitch, energy and voicing aggregated into blocks
//! - [`hmm`]: continuous-density ergodic HMMs and Baum-Welch training
//! - [`sphmm`]: per-speaker acoustic + suprasegmental models and fusion
//! - [`protocol`]: training-set assembly, identification sessions, cross-validation
//! - [`stats`]: evaluation arithmetic (improvement rates, t-test, kappa)
//! - [`report`]: delimited report writers

pub mod corpus;
pub mod dsp;
mod error;
pub mod exec;
pub mod features;
pub mod hmm;
pub mod prosody;
pub mod protocol;
pub mod report;
pub mod sphmm;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
