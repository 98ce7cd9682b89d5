//! Per-speaker acoustic and suprasegmental models and the fused decision
//! score `(1 - α) log P(λ|O) + α log P(Ψ|O)`.
//!
//! Posteriors are returned without the shared `-log P(O)` evidence term.
//! It is the same for every speaker in one identification call, so it never
//! changes the argmax.

use std::fmt::Write as _;

use crate::dsp::LfpcSequence;
use crate::hmm::{self, baum_welch_train, init_model, init_model_from_labels, HmmModel, TrainingConfig};
use crate::prosody::SuprasegmentalSequence;
use crate::{Error, Result};

/// Convex stream weight `α`; 0 is purely acoustic, 1 purely prosodic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub const ACOUSTIC_ONLY: FusionWeight = FusionWeight(0.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(FusionWeight(alpha))
        } else {
            Err(Error::InvalidArgument(format!("fusion weight {alpha} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        FusionWeight(0.5)
    }
}

/// Both observation streams of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct DualObservation {
    pub acoustic: LfpcSequence,
    pub prosodic: SuprasegmentalSequence,
    prosodic_rows: Vec<Vec<f64>>,
}

impl DualObservation {
    pub fn new(acoustic: LfpcSequence, prosodic: SuprasegmentalSequence) -> Result<Self> {
        if acoustic.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: empty acoustic stream", acoustic.provenance)));
        }
        if prosodic.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: empty prosodic stream", acoustic.provenance)));
        }
        let prosodic_rows = prosodic.to_rows();
        Ok(DualObservation {
            acoustic,
            prosodic,
            prosodic_rows,
        })
    }

    pub fn prosodic_rows(&self) -> &[Vec<f64>] {
        &self.prosodic_rows
    }
}

/// `log P(O|λ) + log P₀(λ)`.
pub fn log_posterior_acoustic(model: &HmmModel, prior: f64, obs: &LfpcSequence) -> Result<f64> {
    check_prior(prior)?;
    Ok(model.log_forward(&obs.frames)? + prior.ln())
}

/// `log P(O|Ψ) + log P₀(Ψ)` on the prosodic stream.
pub fn log_posterior_suprasegmental(model: &HmmModel, prior: f64, obs: &SuprasegmentalSequence) -> Result<f64> {
    check_prior(prior)?;
    if obs.is_empty() {
        return Err(Error::InvalidArgument("empty prosodic stream".into()));
    }
    Ok(model.log_forward(&obs.to_rows())? + prior.ln())
}

fn check_prior(prior: f64) -> Result<()> {
    if prior > 0.0 && prior <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("prior {prior} outside (0, 1]")))
    }
}

/// Model sizes. Each suprasegmental state spans
/// `acoustic_states / suprasegmental_states` acoustic states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub acoustic_states: usize,
    pub acoustic_mixtures: usize,
    pub suprasegmental_states: usize,
    pub suprasegmental_mixtures: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            acoustic_states: 9,
            acoustic_mixtures: 10,
            suprasegmental_states: 3,
            suprasegmental_mixtures: 2,
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        let ok = self.acoustic_states > 0
            && self.suprasegmental_states > 0
            && self.acoustic_mixtures > 0
            && self.suprasegmental_mixtures > 0
            && self.acoustic_states.is_multiple_of(self.suprasegmental_states);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "topology needs positive sizes and acoustic states divisible by suprasegmental states: {self:?}"
            )))
        }
    }

    pub fn group_size(&self) -> usize {
        self.acoustic_states / self.suprasegmental_states
    }
}

/// Stream log posteriors of one utterance under one speaker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamScores {
    pub acoustic: f64,
    pub suprasegmental: f64,
}

impl StreamScores {
    pub fn fused(&self, alpha: FusionWeight) -> f64 {
        let a = alpha.value();
        (1.0 - a) * self.acoustic + a * self.suprasegmental
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModel {
    pub speaker_id: String,
    pub acoustic: HmmModel,
    pub suprasegmental: HmmModel,
    pub prior_acoustic: f64,
    pub prior_suprasegmental: f64,
}

impl SpeakerModel {
    pub fn stream_scores(&self, obs: &DualObservation) -> Result<StreamScores> {
        check_prior(self.prior_acoustic)?;
        check_prior(self.prior_suprasegmental)?;
        Ok(StreamScores {
            acoustic: self.acoustic.log_forward(&obs.acoustic.frames)? + self.prior_acoustic.ln(),
            suprasegmental: self.suprasegmental.log_forward(obs.prosodic_rows())? + self.prior_suprasegmental.ln(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "emosid-speaker 1");
        let _ = writeln!(out, "speaker_id {}", self.speaker_id);
        let _ = writeln!(out, "prior_acoustic {:?}", self.prior_acoustic);
        let _ = writeln!(out, "prior_suprasegmental {:?}", self.prior_suprasegmental);
        let _ = writeln!(out, "acoustic");
        out.push_str(&hmm::write_model(&self.acoustic));
        let _ = writeln!(out, "suprasegmental");
        out.push_str(&hmm::write_model(&self.suprasegmental));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |m: &str| Error::Format {
            path: "<speaker model>".into(),
            message: m.to_string(),
        };
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| err(&format!("missing `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ if line == key => Ok(String::new()),
                _ => Err(err(&format!("expected `{key}`, found `{line}`"))),
            }
        };
        if field("emosid-speaker")? != "1" {
            return Err(err("unsupported speaker model version"));
        }
        let speaker_id = field("speaker_id")?;
        let prior_acoustic = field("prior_acoustic")?.parse().map_err(|_| err("invalid prior_acoustic"))?;
        let prior_suprasegmental = field("prior_suprasegmental")?
            .parse()
            .map_err(|_| err("invalid prior_suprasegmental"))?;
        field("acoustic")?;
        let acoustic = hmm::parse_model_lines(&mut lines)?;
        match lines.next() {
            Some("suprasegmental") => {}
            _ => return Err(err("expected `suprasegmental`")),
        }
        let suprasegmental = hmm::parse_model_lines(&mut lines)?;
        check_prior(prior_acoustic)?;
        check_prior(prior_suprasegmental)?;
        Ok(SpeakerModel {
            speaker_id,
            acoustic,
            suprasegmental,
            prior_acoustic,
            prior_suprasegmental,
        })
    }
}

/// `log P(λ, Ψ | O)` up to the shared evidence term.
pub fn fused_log_score(model: &SpeakerModel, obs: &DualObservation, alpha: FusionWeight) -> Result<f64> {
    Ok(model.stream_scores(obs)?.fused(alpha))
}

/// Sets uniform priors `1/V` over the registered population.
pub fn register_population(models: &mut [SpeakerModel]) {
    let p = 1.0 / models.len() as f64;
    for m in models {
        m.prior_acoustic = p;
        m.prior_suprasegmental = p;
    }
}

/// Majority suprasegmental label of each prosodic block, from an acoustic
/// state path. Block `b` of `B` covers acoustic frames
/// `[b*T/B, (b+1)*T/B)`; ties go to the lowest label.
fn block_labels(path: &[usize], blocks: usize, group: usize, n_supra: usize) -> Vec<usize> {
    let t = path.len();
    (0..blocks)
        .map(|b| {
            let lo = b * t / blocks;
            let hi = ((b + 1) * t / blocks).max(lo + 1).min(t);
            let mut votes = vec![0usize; n_supra];
            for &s in &path[lo..hi] {
                votes[(s / group).min(n_supra - 1)] += 1;
            }
            votes
                .iter()
                .enumerate()
                .fold((0, 0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0
        })
        .collect()
}

/// Trains the acoustic model first, then the suprasegmental model on the
/// same utterances, initialized from the acoustic model's Viterbi state
/// partition grouped into suprasegmental states. Priors start at 1.
pub fn train_speaker_model(
    speaker_id: &str,
    train_set: &[&DualObservation],
    topology: &Topology,
    cfg: &TrainingConfig,
) -> Result<SpeakerModel> {
    topology.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData(format!("{speaker_id}: no training utterances")));
    }
    let acoustic_data: Vec<&[Vec<f64>]> = train_set.iter().map(|o| o.acoustic.frames.as_slice()).collect();
    let init = init_model(
        &acoustic_data,
        topology.acoustic_states,
        topology.acoustic_mixtures,
        cfg.seed,
        cfg.variance_floor,
    )?;
    let acoustic = baum_welch_train(&init, &acoustic_data, cfg)?.model;

    let paths = cfg.execution.try_map(&acoustic_data, |frames| acoustic.viterbi(frames).map(|(p, _)| p))?;
    let prosodic_data: Vec<&[Vec<f64>]> = train_set.iter().map(|o| o.prosodic_rows()).collect();
    let labels: Vec<Vec<usize>> = paths
        .iter()
        .zip(&prosodic_data)
        .map(|(p, rows)| block_labels(p, rows.len(), topology.group_size(), topology.suprasegmental_states))
        .collect();
    let supra_init = init_model_from_labels(
        &prosodic_data,
        &labels,
        topology.suprasegmental_states,
        topology.suprasegmental_mixtures,
        cfg.seed.wrapping_add(1),
        cfg.variance_floor,
        cfg.transition_floor,
    )?;
    let suprasegmental = baum_welch_train(&supra_init, &prosodic_data, cfg)?.model;

    Ok(SpeakerModel {
        speaker_id: speaker_id.to_string(),
        acoustic,
        suprasegmental,
        prior_acoustic: 1.0,
        prior_suprasegmental: 1.0,
    })
}
