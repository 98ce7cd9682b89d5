//! Acoustic front end: framing, Hamming weighting, DFT magnitudes, a
//! log-spaced rectangular filter bank and log frequency power coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Floor applied before taking logarithms of energies.
pub const ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePlan {
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FramePlan {
    pub fn new(window_length: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if !(window_length > hop && hop > 0) {
            return Err(Error::InvalidArgument(format!(
                "frame plan needs window > hop > 0 (window {window_length}, hop {hop})"
            )));
        }
        Ok(FramePlan {
            window_length,
            hop,
            sample_rate,
        })
    }

    pub fn from_ms(window_ms: f64, hop_ms: f64, sample_rate: u32) -> Result<Self> {
        let samples = |ms: f64| (ms * f64::from(sample_rate) / 1000.0).round() as usize;
        Self::new(samples(window_ms), samples(hop_ms), sample_rate)
    }

    /// 30 ms windows every 5 ms.
    pub fn standard(sample_rate: u32) -> Self {
        Self::from_ms(30.0, 5.0, sample_rate).expect("30/5 ms is a valid plan")
    }

    /// `floor((len - window) / hop) + 1`, or 0 when the signal is shorter
    /// than one window.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.hop + 1
        }
    }
}

/// Frame `t` covers samples `[t*hop, t*hop + window)`.
pub fn frame_signal<'a>(samples: &'a [f64], plan: &FramePlan) -> Result<Vec<&'a [f64]>> {
    if samples.len() < plan.window_length {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples is shorter than one {}-sample window",
            samples.len(),
            plan.window_length
        )));
    }
    Ok((0..plan.frame_count(samples.len()))
        .map(|t| &samples[t * plan.hop..t * plan.hop + plan.window_length])
        .collect())
}

pub fn hamming_weights(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

pub fn apply_hamming(window: &[f64]) -> Vec<f64> {
    window
        .iter()
        .zip(hamming_weights(window.len()))
        .map(|(x, w)| x * w)
        .collect()
}

/// DFT magnitudes `X_t(k)` for `k = 0..=n_fft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub magnitudes: Vec<f64>,
    pub n_fft: usize,
    pub sample_rate: u32,
}

impl SpectralFrame {
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.n_fft as f64
    }
}

/// Reusable FFT of one size.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    n_fft: usize,
    sample_rate: u32,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer").field("n_fft", &self.n_fft).finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(n_fft: usize, sample_rate: u32) -> Result<Self> {
        if n_fft < 2 || !n_fft.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("n_fft {n_fft} is not a power of two")));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(SpectrumAnalyzer {
            n_fft,
            sample_rate,
            fft,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Magnitudes of the zero-padded window.
    pub fn magnitudes(&self, window: &[f64]) -> Result<SpectralFrame> {
        if window.len() > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "n_fft {} is smaller than the {}-sample window",
                self.n_fft,
                window.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = window.iter().map(|&x| Complex::new(x, 0.0)).collect();
        buf.resize(self.n_fft, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        Ok(SpectralFrame {
            magnitudes: buf[..=self.n_fft / 2].iter().map(|c| c.norm()).collect(),
            n_fft: self.n_fft,
            sample_rate: self.sample_rate,
        })
    }
}

pub fn power_spectrum(window: &[f64], n_fft: usize, sample_rate: u32) -> Result<SpectralFrame> {
    SpectrumAnalyzer::new(n_fft, sample_rate)?.magnitudes(window)
}

/// One rectangular band over DFT bins `lower..=upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: usize,
    pub upper: usize,
    pub lower_hz: f64,
    pub upper_hz: f64,
    /// Geometric center of the band edges.
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

impl Band {
    pub fn bins(&self) -> usize {
        self.upper - self.lower + 1
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.lower..=self.upper).contains(&k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub bands: Vec<Band>,
    pub n_fft: usize,
    pub sample_rate: u32,
}

impl FilterBank {
    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Binary mask `W_m(k)`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        if self.bands[m].contains(k) {
            1.0
        } else {
            0.0
        }
    }

    pub fn band_widths(&self) -> Vec<usize> {
        self.bands.iter().map(Band::bins).collect()
    }
}

/// Log-spaced contiguous bands between `f_low` and `f_high`.
///
/// Edge `i` sits at `f_low * (f_high / f_low)^(i / n_bands)` Hz and is
/// rounded to the nearest bin; each band then starts one bin after the
/// previous band's upper edge, and is widened to at least one bin.
pub fn build_log_filterbank(
    n_bands: usize,
    f_low: f64,
    f_high: f64,
    n_fft: usize,
    sample_rate: u32,
) -> Result<FilterBank> {
    let nyquist = f64::from(sample_rate) / 2.0;
    if !(f_low > 0.0 && f_low < f_high && f_high <= nyquist) || n_bands == 0 {
        return Err(Error::InvalidArgument(format!(
            "filter bank needs 0 < f_low < f_high <= {nyquist} Hz and at least one band (got {f_low}..{f_high}, {n_bands} bands)"
        )));
    }
    let hz_per_bin = f64::from(sample_rate) / n_fft as f64;
    let to_bin = |f: f64| (f / hz_per_bin).round() as usize;
    let ratio = f_high / f_low;
    let edges: Vec<f64> = (0..=n_bands)
        .map(|i| f_low * ratio.powf(i as f64 / n_bands as f64))
        .collect();

    let last_bin = to_bin(f_high).min(n_fft / 2);
    let mut bands = Vec::with_capacity(n_bands);
    let mut lower = to_bin(f_low);
    for m in 0..n_bands {
        let upper = to_bin(edges[m + 1]).max(lower);
        if upper > last_bin {
            return Err(Error::InvalidArgument(format!(
                "{} DFT bins between {f_low} and {f_high} Hz cannot hold {n_bands} bands",
                last_bin + 1 - to_bin(f_low)
            )));
        }
        bands.push(Band {
            lower,
            upper,
            lower_hz: edges[m],
            upper_hz: edges[m + 1],
            center_hz: (edges[m] * edges[m + 1]).sqrt(),
            bandwidth_hz: edges[m + 1] - edges[m],
        });
        lower = upper + 1;
    }
    Ok(FilterBank {
        bands,
        n_fft,
        sample_rate,
    })
}

/// `S_t(m) = sum_k [X_t(k) W_m(k)]^2`, i.e. the power inside each band.
pub fn filterbank_energies(frame: &SpectralFrame, bank: &FilterBank) -> Vec<f64> {
    bank.bands
        .iter()
        .map(|b| {
            frame.magnitudes[b.lower..=b.upper.min(frame.magnitudes.len() - 1)]
                .iter()
                .map(|x| x * x)
                .sum()
        })
        .collect()
}

/// `10 log10(max(S(m) / B_m, 1e-10))` with `B_m` the band's bin count.
pub fn lfpc(energies: &[f64], band_widths: &[usize]) -> Vec<f64> {
    energies
        .iter()
        .zip(band_widths)
        .map(|(&s, &b)| 10.0 * (s / b as f64).max(ENERGY_FLOOR).log10())
        .collect()
}

/// Per-frame coefficient vectors of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LfpcSequence {
    pub frames: Vec<Vec<f64>>,
    pub provenance: String,
}

impl LfpcSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Subtracts the per-coefficient mean over the utterance.
    pub fn mean_normalized(mut self) -> Self {
        let n = self.frames.len() as f64;
        if n == 0.0 {
            return self;
        }
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        for f in &self.frames {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / n;
            }
        }
        for f in &mut self.frames {
            for (v, m) in f.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfpcConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_fft: usize,
    pub n_bands: usize,
    pub f_low: f64,
    pub f_high: f64,
    pub mean_normalize: bool,
}

impl Default for LfpcConfig {
    fn default() -> Self {
        LfpcConfig {
            window_ms: 30.0,
            hop_ms: 5.0,
            n_fft: 512,
            n_bands: 16,
            f_low: 100.0,
            f_high: 8000.0,
            mean_normalize: false,
        }
    }
}

/// Audio to LFPC frames with a fixed configuration.
#[derive(Debug, Clone)]
pub struct LfpcExtractor {
    pub plan: FramePlan,
    pub bank: FilterBank,
    analyzer: SpectrumAnalyzer,
    weights: Vec<f64>,
    band_widths: Vec<usize>,
    mean_normalize: bool,
}

impl LfpcExtractor {
    pub fn new(cfg: &LfpcConfig, sample_rate: u32) -> Result<Self> {
        let plan = FramePlan::from_ms(cfg.window_ms, cfg.hop_ms, sample_rate)?;
        if cfg.n_fft < plan.window_length {
            return Err(Error::InvalidArgument(format!(
                "n_fft {} is smaller than the {}-sample window",
                cfg.n_fft, plan.window_length
            )));
        }
        let bank = build_log_filterbank(cfg.n_bands, cfg.f_low, cfg.f_high, cfg.n_fft, sample_rate)?;
        Ok(LfpcExtractor {
            plan,
            analyzer: SpectrumAnalyzer::new(cfg.n_fft, sample_rate)?,
            weights: hamming_weights(plan.window_length),
            band_widths: bank.band_widths(),
            bank,
            mean_normalize: cfg.mean_normalize,
        })
    }

    pub fn frame_coefficients(&self, window: &[f64]) -> Result<Vec<f64>> {
        let weighted: Vec<f64> = window.iter().zip(&self.weights).map(|(x, w)| x * w).collect();
        let spectrum = self.analyzer.magnitudes(&weighted)?;
        Ok(lfpc(&filterbank_energies(&spectrum, &self.bank), &self.band_widths))
    }

    pub fn extract(&self, samples: &[f64], provenance: impl Into<String>) -> Result<LfpcSequence> {
        let frames = frame_signal(samples, &self.plan)?
            .into_iter()
            .map(|w| self.frame_coefficients(w))
            .collect::<Result<Vec<_>>>()?;
        let seq = LfpcSequence {
            frames,
            provenance: provenance.into(),
        };
        Ok(if self.mean_normalize {
            seq.mean_normalized()
        } else {
            seq
        })
    }
}
