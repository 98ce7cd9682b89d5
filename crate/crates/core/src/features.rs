//! Audio to the two observation streams, plus feature-file IO for both.

use std::path::{Path, PathBuf};

use crate::corpus::{read_feature_file, write_feature_file, AudioSignal, FeatureMatrix};
use crate::dsp::{LfpcConfig, LfpcExtractor, LfpcSequence};
use crate::prosody::{analyze_frames, build_suprasegmental_sequence, ProsodyConfig, SuprasegmentalSequence, PROSODIC_DIM};
use crate::sphmm::DualObservation;
use crate::{dsp, Error, Result};

pub const PROSODY_EXTENSION: &str = "pros";
pub const LFPC_EXTENSION: &str = "lfpc";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureConfig {
    pub lfpc: LfpcConfig,
    pub prosody: ProsodyConfig,
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    lfpc: LfpcExtractor,
    prosody: ProsodyConfig,
}

impl FeatureExtractor {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32) -> Result<Self> {
        Ok(FeatureExtractor {
            lfpc: LfpcExtractor::new(&cfg.lfpc, sample_rate)?,
            prosody: cfg.prosody.clone(),
        })
    }

    pub fn extract(&self, signal: &AudioSignal, provenance: &str) -> Result<DualObservation> {
        if signal.sample_rate != self.lfpc.plan.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "{provenance}: sample rate {} Hz, extractor configured for {} Hz",
                signal.sample_rate, self.lfpc.plan.sample_rate
            )));
        }
        let samples = signal.to_f64();
        let acoustic = self.lfpc.extract(&samples, provenance)?;
        let windows = dsp::frame_signal(&samples, &self.lfpc.plan)?;
        let frames = analyze_frames(&windows, signal.sample_rate, &self.prosody);
        let prosodic = build_suprasegmental_sequence(&frames, self.prosody.block_size)?;
        DualObservation::new(acoustic, prosodic)
    }
}

/// Prosodic companion of an acoustic feature path (`x.lfpc` -> `x.pros`).
pub fn prosody_path(acoustic: &Path) -> PathBuf {
    acoustic.with_extension(PROSODY_EXTENSION)
}

pub fn write_observation(obs: &DualObservation, acoustic_path: &Path) -> Result<()> {
    let a = FeatureMatrix::new(obs.acoustic.dim(), obs.acoustic.frames.clone())?;
    write_feature_file(&a, acoustic_path)?;
    let p = FeatureMatrix::new(PROSODIC_DIM, obs.prosodic.to_rows())?;
    write_feature_file(&p, &prosody_path(acoustic_path))
}

pub fn read_observation(acoustic_path: &Path, block_size: usize) -> Result<DualObservation> {
    let a = read_feature_file(acoustic_path)?;
    let p = read_feature_file(&prosody_path(acoustic_path))?;
    if p.columns != PROSODIC_DIM {
        return Err(Error::format(prosody_path(acoustic_path), format!("expected {PROSODIC_DIM} columns, found {}", p.columns)));
    }
    DualObservation::new(
        LfpcSequence {
            frames: a.rows,
            provenance: acoustic_path.display().to_string(),
        },
        SuprasegmentalSequence::from_rows(&p.rows, block_size)?,
    )
}
