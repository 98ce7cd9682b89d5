//! Seeded synthetic corpora with controllable speaker separation.
//!
//! Every utterance mixes a shared phonetic pattern, a speaker offset, a
//! global emotion offset, a speaker-specific emotional deviation and a
//! per-utterance jitter. Speaker-dependent terms scale with `separation`, so
//! at zero all speakers share one distribution. Biased sentences shrink the
//! utterance jitter by `bias_coupling`, tying each speaker's emotional
//! delivery more tightly to the sentence.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    write_audio, write_manifest, AudioSignal, BiasTag, CorpusManifest, Emotion, Gender, Session, UtteranceKey,
    UtteranceRecord, PROTOCOL_SAMPLE_RATE, REPETITIONS, SENTENCES,
};
use crate::dsp::LfpcSequence;
use crate::prosody::{ProsodicVector, SuprasegmentalSequence};
use crate::sphmm::DualObservation;
use crate::{features, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    /// Feature files written directly.
    Features,
    /// 16-bit WAV files for the full extraction path.
    Audio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub emotions: Vec<Emotion>,
    /// Spread of speaker offsets in units of the frame noise.
    pub separation: f64,
    /// Fraction of utterance jitter removed on biased sentences, in `[0, 1]`.
    pub bias_coupling: f64,
    /// Spread of per-utterance offsets.
    pub utterance_jitter: f64,
    pub include_biased: bool,
    pub mode: SynthMode,
    /// Acoustic frames per utterance in feature mode.
    pub frames: usize,
    pub dim: usize,
    /// Prosodic block size in feature mode.
    pub block_size: usize,
    /// Utterance length in audio mode.
    pub duration_ms: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_speakers: 10,
            emotions: vec![Emotion::Neutral, Emotion::Angry, Emotion::Sad],
            separation: 2.0,
            bias_coupling: 0.8,
            utterance_jitter: 1.0,
            include_biased: true,
            mode: SynthMode::Features,
            frames: 45,
            dim: 16,
            block_size: 9,
            duration_ms: 400,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_speakers >= 2
            && self.n_speakers <= 99
            && !self.emotions.is_empty()
            && self.separation >= 0.0
            && self.separation.is_finite()
            && (0.0..=1.0).contains(&self.bias_coupling)
            && self.utterance_jitter >= 0.0
            && self.frames > 0
            && self.dim > 0
            && self.block_size > 0
            && self.duration_ms >= 40;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid synthetic corpus settings: {self:?}")))
        }
    }

    /// Speaker id of ordinal `i` (zero based).
    pub fn speaker_id(i: usize) -> String {
        format!("spk{:02}", i + 1)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Speaker- and emotion-level parameters drawn once per corpus.
struct Population {
    /// Shared per-phase patterns.
    phases: Vec<Vec<f64>>,
    speaker_offsets: Vec<Vec<f64>>,
    emotion_offsets: Vec<Vec<f64>>,
    /// `[speaker][emotion]` deviation.
    deviations: Vec<Vec<Vec<f64>>>,
    /// Prosodic base per speaker: f0 (Hz), f0 range, log energy, voicing.
    prosody: Vec<[f64; 4]>,
    emotion_prosody: Vec<[f64; 4]>,
}

const PHASES: usize = 3;

impl Population {
    fn draw(cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let d = cfg.dim;
        let sep = cfg.separation;
        let phases = (0..PHASES).map(|_| normal_vec(&mut rng, d, 2.0)).collect();
        let emotion_offsets = Emotion::ALL.iter().map(|_| normal_vec(&mut rng, d, 1.5)).collect();
        let emotion_prosody = Emotion::ALL
            .iter()
            .map(|_| [25.0 * normal(&mut rng), 8.0 * normal(&mut rng), 3.0 * normal(&mut rng), 0.05 * normal(&mut rng)])
            .collect();
        let mut speaker_offsets = Vec::new();
        let mut deviations = Vec::new();
        let mut prosody = Vec::new();
        for s in 0..cfg.n_speakers {
            speaker_offsets.push(normal_vec(&mut rng, d, sep));
            deviations.push(Emotion::ALL.iter().map(|_| normal_vec(&mut rng, d, 0.8 * sep)).collect());
            let gender = if s % 2 == 0 { -1.0 } else { 1.0 };
            prosody.push([
                150.0 + sep * (30.0 * gender + 10.0 * normal(&mut rng)),
                30.0 + sep * 4.0 * normal(&mut rng),
                -25.0 + sep * 2.0 * normal(&mut rng),
                0.6 + sep * 0.05 * normal(&mut rng),
            ]);
        }
        Population {
            phases,
            speaker_offsets,
            emotion_offsets,
            deviations,
            prosody,
            emotion_prosody,
        }
    }
}

/// Records of a complete corpus in canonical order.
fn records(cfg: &SynthConfig, extension: &str, dir: &str) -> Vec<UtteranceRecord> {
    let mut out = Vec::new();
    for s in 0..cfg.n_speakers {
        let speaker_id = SynthConfig::speaker_id(s);
        let gender = if s % 2 == 0 { Gender::Male } else { Gender::Female };
        for &emotion in &cfg.emotions {
            let mut tags = vec![BiasTag::Unbiased];
            if cfg.include_biased && emotion != Emotion::Neutral {
                tags.push(BiasTag::Biased(emotion));
            }
            for bias_tag in tags {
                for sentence_id in 1..=SENTENCES {
                    for repetition in 1..=REPETITIONS {
                        let mut r = UtteranceRecord {
                            speaker_id: speaker_id.clone(),
                            gender,
                            emotion,
                            sentence_id,
                            bias_tag,
                            session: Session::for_repetition(repetition),
                            repetition,
                            source: PathBuf::new(),
                        };
                        r.source = PathBuf::from(dir).join(format!("{}.{extension}", r.key()));
                        out.push(r);
                    }
                }
            }
        }
    }
    out
}

fn utterance_rng(cfg: &SynthConfig, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn ordinal(speaker_id: &str) -> usize {
    speaker_id[3..].parse::<usize>().map(|n| n - 1).unwrap_or(0)
}

fn jitter_scale(cfg: &SynthConfig, r: &UtteranceRecord) -> f64 {
    match r.bias_tag {
        BiasTag::Biased(_) => cfg.utterance_jitter * (1.0 - cfg.bias_coupling),
        BiasTag::Unbiased => cfg.utterance_jitter,
    }
}

fn feature_observation(cfg: &SynthConfig, pop: &Population, r: &UtteranceRecord, rng: &mut ChaCha8Rng) -> Result<DualObservation> {
    let s = ordinal(&r.speaker_id);
    let e = r.emotion.ordinal();
    let j = jitter_scale(cfg, r);
    let utt = normal_vec(rng, cfg.dim, j);
    let frames: Vec<Vec<f64>> = (0..cfg.frames)
        .map(|t| {
            let phase = &pop.phases[t * PHASES / cfg.frames];
            (0..cfg.dim)
                .map(|k| {
                    phase[k]
                        + pop.speaker_offsets[s][k]
                        + pop.emotion_offsets[e][k]
                        + pop.deviations[s][e][k]
                        + utt[k]
                        + normal(rng)
                })
                .collect()
        })
        .collect();

    let base = pop.prosody[s];
    let emo = pop.emotion_prosody[e];
    let utt_p = [10.0 * j * normal(rng), 3.0 * j * normal(rng), 1.5 * j * normal(rng), 0.03 * j * normal(rng)];
    let blocks = (0..cfg.frames.div_ceil(cfg.block_size))
        .map(|_| ProsodicVector {
            mean_f0: base[0] + emo[0] + utt_p[0] + 5.0 * normal(rng),
            f0_range: (base[1] + emo[1] + utt_p[1] + 3.0 * normal(rng)).max(0.0),
            mean_log_energy: base[2] + emo[2] + utt_p[2] + normal(rng),
            voiced_fraction: (base[3] + emo[3] + utt_p[3] + 0.05 * normal(rng)).clamp(0.0, 1.0),
        })
        .collect();
    DualObservation::new(
        LfpcSequence {
            frames,
            provenance: r.key().to_string(),
        },
        SuprasegmentalSequence {
            blocks,
            block_size: cfg.block_size,
        },
    )
}

fn audio_signal(cfg: &SynthConfig, pop: &Population, r: &UtteranceRecord, rng: &mut ChaCha8Rng) -> Result<AudioSignal> {
    let s = ordinal(&r.speaker_id);
    let e = r.emotion.ordinal();
    let j = jitter_scale(cfg, r);
    let sr = PROTOCOL_SAMPLE_RATE as f64;
    let n = (cfg.duration_ms as usize * PROTOCOL_SAMPLE_RATE as usize) / 1000;

    let dev = |k: usize| pop.speaker_offsets[s][k % cfg.dim] + pop.deviations[s][e][k % cfg.dim];
    let f0 = (pop.prosody[s][0] + pop.emotion_prosody[e][0] + 10.0 * j * normal(rng)).clamp(80.0, 380.0);
    let formants: Vec<f64> = [500.0, 1500.0, 2500.0, 3500.0]
        .iter()
        .enumerate()
        .map(|(i, c)| c * (1.0 + 0.06 * dev(i) + 0.02 * j * normal(rng)))
        .collect();
    let loudness = 10f64.powf((pop.emotion_prosody[e][2] + 1.5 * j * normal(rng)) / 40.0);
    let vibrato = 0.02 + 0.01 * dev(5).abs().min(3.0);
    // Harmonic amplitudes follow the formant envelope at the mean pitch.
    let harmonics = (7000.0 / (f0 * (1.0 + vibrato))).floor().max(1.0) as usize;
    let amps: Vec<f64> = (1..=harmonics)
        .map(|h| {
            let hf = h as f64 * f0;
            formants.iter().map(|c| (-((hf - c) / 250.0).powi(2)).exp()).sum::<f64>() + 0.05
        })
        .collect();
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + vibrato * (2.0 * PI * 4.0 * t).sin());
        phase += 2.0 * PI * f / sr;
        let x: f64 = amps.iter().enumerate().map(|(h, a)| a * ((h + 1) as f64 * phase).sin()).sum();
        samples.push(0.1 * loudness * x + 0.003 * rng.random_range(-1.0..1.0));
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let gain = (0.5 / peak).min(1.0);
    let pcm = samples
        .into_iter()
        .map(|v| (v * gain * 32767.0).round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    AudioSignal::new(pcm, PROTOCOL_SAMPLE_RATE)
}

/// A corpus held in memory (feature mode only).
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    pub observations: HashMap<UtteranceKey, DualObservation>,
}

/// Generates observations without touching disk.
pub fn synthesize(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let pop = Population::draw(cfg);
    let recs = records(cfg, features::LFPC_EXTENSION, "features");
    let mut observations = HashMap::with_capacity(recs.len());
    for (i, r) in recs.iter().enumerate() {
        let obs = feature_observation(cfg, &pop, r, &mut utterance_rng(cfg, i))?;
        observations.insert(r.key(), obs);
    }
    Ok(SyntheticCorpus {
        manifest: synthetic_manifest(cfg, recs, PathBuf::new()),
        observations,
    })
}

fn synthetic_manifest(cfg: &SynthConfig, records: Vec<UtteranceRecord>, base_dir: PathBuf) -> CorpusManifest {
    let mut m = CorpusManifest::new(records, PROTOCOL_SAMPLE_RATE);
    m.base_dir = base_dir;
    m.metadata.insert("generator".into(), "emosid-synth".into());
    m.metadata.insert("seed".into(), cfg.seed.to_string());
    m.metadata.insert("separation".into(), format!("{:?}", cfg.separation));
    m.metadata.insert("bias_coupling".into(), format!("{:?}", cfg.bias_coupling));
    m
}

/// Writes a corpus and its `manifest.csv` under `out_dir`, returning the
/// manifest. Sources are relative to `out_dir`.
pub fn generate_synthetic_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<CorpusManifest> {
    cfg.validate()?;
    let pop = Population::draw(cfg);
    let recs = match cfg.mode {
        SynthMode::Features => records(cfg, features::LFPC_EXTENSION, "features"),
        SynthMode::Audio => records(cfg, "wav", "audio"),
    };
    for (i, r) in recs.iter().enumerate() {
        let path = out_dir.join(&r.source);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut rng = utterance_rng(cfg, i);
        match cfg.mode {
            SynthMode::Features => features::write_observation(&feature_observation(cfg, &pop, r, &mut rng)?, &path)?,
            SynthMode::Audio => write_audio(&audio_signal(cfg, &pop, r, &mut rng)?, &path)?,
        }
    }
    let manifest = synthetic_manifest(cfg, recs, out_dir.to_path_buf());
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
