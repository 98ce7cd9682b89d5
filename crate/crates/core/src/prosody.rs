//! Suprasegmental observations: per-frame pitch, energy and voicing,
//! aggregated over fixed blocks of frames.

use crate::dsp::{frame_signal, FramePlan, ENERGY_FLOOR};
use crate::{Error, Result};

pub const PROSODIC_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyConfig {
    /// Frames per block.
    pub block_size: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        ProsodyConfig {
            block_size: 9,
            f0_min: 75.0,
            f0_max: 400.0,
            voicing_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    pub f0: f64,
    pub voiced: bool,
}

impl PitchEstimate {
    const UNVOICED: PitchEstimate = PitchEstimate {
        f0: 0.0,
        voiced: false,
    };
}

/// Autocorrelation pitch estimate.
///
/// Uses `r(τ) = Σ x[n] x[n+τ] / Σ x[n]²` over lags `rate/f_max ..= rate/f_min`
/// (clipped to the window). The frame is voiced when the peak reaches the
/// threshold; the `1/N`-style taper of `r` favors the shortest period on
/// periodic input.
pub fn estimate_f0(window: &[f64], sample_rate: u32, f0_min: f64, f0_max: f64, threshold: f64) -> PitchEstimate {
    let rate = f64::from(sample_rate);
    let energy: f64 = window.iter().map(|x| x * x).sum();
    if energy <= 0.0 || window.len() < 2 {
        return PitchEstimate::UNVOICED;
    }
    let min_lag = ((rate / f0_max).ceil() as usize).max(1);
    let max_lag = ((rate / f0_min).floor() as usize).min(window.len() - 1);
    if min_lag > max_lag {
        return PitchEstimate::UNVOICED;
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in min_lag..=max_lag {
        let r: f64 = window[..window.len() - lag]
            .iter()
            .zip(&window[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / energy;
        if r > best.1 {
            best = (lag, r);
        }
    }
    if best.1 >= threshold {
        PitchEstimate {
            f0: rate / best.0 as f64,
            voiced: true,
        }
    } else {
        PitchEstimate::UNVOICED
    }
}

/// `10 log10(max(mean(x²), 1e-10))`.
pub fn frame_log_energy(window: &[f64]) -> f64 {
    let mean = window.iter().map(|x| x * x).sum::<f64>() / window.len().max(1) as f64;
    10.0 * mean.max(ENERGY_FLOOR).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameProsody {
    pub pitch: PitchEstimate,
    pub log_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodicVector {
    pub mean_f0: f64,
    pub f0_range: f64,
    pub mean_log_energy: f64,
    pub voiced_fraction: f64,
}

impl ProsodicVector {
    pub fn to_array(self) -> [f64; PROSODIC_DIM] {
        [self.mean_f0, self.f0_range, self.mean_log_energy, self.voiced_fraction]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != PROSODIC_DIM {
            return Err(Error::DimensionMismatch {
                expected: PROSODIC_DIM,
                found: v.len(),
            });
        }
        Ok(ProsodicVector {
            mean_f0: v[0],
            f0_range: v[1],
            mean_log_energy: v[2],
            voiced_fraction: v[3],
        })
    }

    fn aggregate(frames: &[FrameProsody]) -> Self {
        let voiced: Vec<f64> = frames.iter().filter(|f| f.pitch.voiced).map(|f| f.pitch.f0).collect();
        let (mean_f0, f0_range) = if voiced.is_empty() {
            (0.0, 0.0)
        } else {
            let max = voiced.iter().copied().fold(f64::MIN, f64::max);
            let min = voiced.iter().copied().fold(f64::MAX, f64::min);
            (voiced.iter().sum::<f64>() / voiced.len() as f64, max - min)
        };
        ProsodicVector {
            mean_f0,
            f0_range,
            mean_log_energy: frames.iter().map(|f| f.log_energy).sum::<f64>() / frames.len() as f64,
            voiced_fraction: voiced.len() as f64 / frames.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuprasegmentalSequence {
    pub blocks: Vec<ProsodicVector>,
    pub block_size: usize,
}

impl SuprasegmentalSequence {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.to_array().to_vec()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>], block_size: usize) -> Result<Self> {
        Ok(SuprasegmentalSequence {
            blocks: rows.iter().map(|r| ProsodicVector::from_slice(r)).collect::<Result<_>>()?,
            block_size,
        })
    }
}

pub fn analyze_frames(windows: &[&[f64]], sample_rate: u32, cfg: &ProsodyConfig) -> Vec<FrameProsody> {
    windows
        .iter()
        .map(|w| FrameProsody {
            pitch: estimate_f0(w, sample_rate, cfg.f0_min, cfg.f0_max, cfg.voicing_threshold),
            log_energy: frame_log_energy(w),
        })
        .collect()
}

/// Groups consecutive frames into blocks of `block_size` (the last block may
/// be short) and summarizes each block.
pub fn build_suprasegmental_sequence(frames: &[FrameProsody], block_size: usize) -> Result<SuprasegmentalSequence> {
    if block_size == 0 {
        return Err(Error::InvalidArgument("block size must be at least 1".into()));
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to aggregate".into()));
    }
    Ok(SuprasegmentalSequence {
        blocks: frames.chunks(block_size).map(ProsodicVector::aggregate).collect(),
        block_size,
    })
}

/// Frames the signal with `plan` and builds its prosodic block sequence.
pub fn extract_prosody(samples: &[f64], plan: &FramePlan, cfg: &ProsodyConfig) -> Result<SuprasegmentalSequence> {
    let windows = frame_signal(samples, plan)?;
    build_suprasegmental_sequence(&analyze_frames(&windows, plan.sample_rate, cfg), cfg.block_size)
}
