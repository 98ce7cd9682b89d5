//! Flat key-value run configuration. Every key can come from the TOML file
//! given with `--config` or from a command-line flag of the same name; flags
//! win.

use std::path::{Path, PathBuf};

use clap::Args;
use emosid::corpus::{Emotion, SynthConfig, SynthMode, TrainingPlan};
use emosid::dsp::LfpcConfig;
use emosid::features::FeatureConfig;
use emosid::hmm::TrainingConfig;
use emosid::prosody::ProsodyConfig;
use emosid::sphmm::{FusionWeight, Topology};
use emosid::Execution;
use serde::Deserialize;

/// A configuration value that failed validation.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

macro_rules! settings {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty ),* $(,)?) => {
        /// Settings shared by every command.
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $(
                $(#[$doc])*
                #[arg(long = stringify!($name), global = true)]
                pub $name: Option<$ty>,
            )*
        }

        impl Settings {
            /// Fills every unset field from `base`.
            pub fn or(self, base: Settings) -> Settings {
                Settings { $( $name: self.$name.or(base.$name), )* }
            }
        }
    };
}

settings! {
    /// Corpus manifest (CSV).
    manifest: PathBuf,
    /// Output directory for features, models and reports.
    out_dir: PathBuf,
    /// `unbiased` or `biased:<emotion>`.
    plan: String,
    /// Fusion weight of the prosodic stream, in [0, 1].
    alpha: f64,
    /// Second fusion weight to evaluate and compare against `alpha`.
    compare_alpha: f64,
    /// Sample size entering the pooled standard deviation.
    n: usize,
    seed: u64,
    /// `parallel` or `sequential`.
    execution: String,
    acoustic_states: usize,
    acoustic_mixtures: usize,
    suprasegmental_states: usize,
    suprasegmental_mixtures: usize,
    window_ms: f64,
    hop_ms: f64,
    n_fft: usize,
    n_bands: usize,
    f_low: f64,
    f_high: f64,
    mean_normalize: bool,
    block_size: usize,
    f0_min: f64,
    f0_max: f64,
    voicing_threshold: f64,
    max_iterations: usize,
    convergence_delta: f64,
    variance_floor: f64,
    /// Cross-validation subsets.
    folds: usize,
    /// Synthetic corpus: number of speakers.
    speakers: usize,
    /// Synthetic corpus: comma-separated emotions.
    emotions: String,
    /// Synthetic corpus: speaker separation.
    separation: f64,
    /// Synthetic corpus: jitter reduction on biased sentences.
    bias_coupling: f64,
    /// Synthetic corpus: include biased sentence sets.
    include_biased: bool,
    /// Synthetic corpus: `features` or `audio`.
    synth_mode: String,
    /// Synthetic corpus: frames per utterance (feature mode).
    frames: usize,
    /// Synthetic corpus: utterance length in ms (audio mode).
    duration_ms: u32,
}

impl Settings {
    pub fn from_file(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved settings with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub plan: TrainingPlan,
    pub alpha: FusionWeight,
    pub compare_alpha: Option<FusionWeight>,
    pub n: Option<usize>,
    pub seed: u64,
    pub execution: Execution,
    pub topology: Topology,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub folds: usize,
    pub synth: SynthConfig,
}

fn alpha(v: f64) -> anyhow::Result<FusionWeight> {
    FusionWeight::new(v).map_err(|e| invalid(e.to_string()))
}

impl RunConfig {
    pub fn resolve(s: Settings) -> anyhow::Result<RunConfig> {
        let plan = match &s.plan {
            Some(p) => p.parse::<TrainingPlan>().map_err(|e| invalid(e.to_string()))?,
            None => TrainingPlan::Unbiased,
        };
        // biased:neutral is the unbiased plan
        let plan = match plan {
            TrainingPlan::Biased(e) => TrainingPlan::biased(e),
            p => p,
        };
        let execution = match s.execution.as_deref() {
            None => Execution::default(),
            Some("parallel") => Execution::Parallel,
            Some("sequential") => Execution::Sequential,
            Some(other) => return Err(invalid(format!("execution must be parallel or sequential, got {other:?}"))),
        };
        let seed = s.seed.unwrap_or(0);

        let topo_default = Topology::default();
        let topology = Topology {
            acoustic_states: s.acoustic_states.unwrap_or(topo_default.acoustic_states),
            acoustic_mixtures: s.acoustic_mixtures.unwrap_or(topo_default.acoustic_mixtures),
            suprasegmental_states: s.suprasegmental_states.unwrap_or(topo_default.suprasegmental_states),
            suprasegmental_mixtures: s.suprasegmental_mixtures.unwrap_or(topo_default.suprasegmental_mixtures),
        };
        topology.validate().map_err(|e| invalid(e.to_string()))?;

        let l = LfpcConfig::default();
        let p = ProsodyConfig::default();
        let features = FeatureConfig {
            lfpc: LfpcConfig {
                window_ms: s.window_ms.unwrap_or(l.window_ms),
                hop_ms: s.hop_ms.unwrap_or(l.hop_ms),
                n_fft: s.n_fft.unwrap_or(l.n_fft),
                n_bands: s.n_bands.unwrap_or(l.n_bands),
                f_low: s.f_low.unwrap_or(l.f_low),
                f_high: s.f_high.unwrap_or(l.f_high),
                mean_normalize: s.mean_normalize.unwrap_or(l.mean_normalize),
            },
            prosody: ProsodyConfig {
                block_size: s.block_size.unwrap_or(p.block_size),
                f0_min: s.f0_min.unwrap_or(p.f0_min),
                f0_max: s.f0_max.unwrap_or(p.f0_max),
                voicing_threshold: s.voicing_threshold.unwrap_or(p.voicing_threshold),
            },
        };
        if features.prosody.block_size == 0 || !(features.prosody.f0_min > 0.0 && features.prosody.f0_max > features.prosody.f0_min) {
            return Err(invalid(format!("invalid prosody settings: {:?}", features.prosody)));
        }

        let t = TrainingConfig::default();
        let training = TrainingConfig {
            max_iterations: s.max_iterations.unwrap_or(t.max_iterations),
            convergence_delta: s.convergence_delta.unwrap_or(t.convergence_delta),
            variance_floor: s.variance_floor.unwrap_or(t.variance_floor),
            seed,
            execution,
            ..t
        };
        training.validate().map_err(|e| invalid(e.to_string()))?;

        let sd = SynthConfig::default();
        let emotions = match &s.emotions {
            None => sd.emotions.clone(),
            Some(list) => list
                .split(',')
                .map(|e| e.trim().parse::<Emotion>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| invalid(e.to_string()))?,
        };
        let mode = match s.synth_mode.as_deref() {
            None | Some("features") => SynthMode::Features,
            Some("audio") => SynthMode::Audio,
            Some(other) => return Err(invalid(format!("synth_mode must be features or audio, got {other:?}"))),
        };
        let synth = SynthConfig {
            seed,
            n_speakers: s.speakers.unwrap_or(sd.n_speakers),
            emotions,
            separation: s.separation.unwrap_or(sd.separation),
            bias_coupling: s.bias_coupling.unwrap_or(sd.bias_coupling),
            include_biased: s.include_biased.unwrap_or(sd.include_biased),
            mode,
            frames: s.frames.unwrap_or(sd.frames),
            dim: features.lfpc.n_bands,
            block_size: features.prosody.block_size,
            duration_ms: s.duration_ms.unwrap_or(sd.duration_ms),
            ..sd
        };

        let folds = s.folds.unwrap_or(5);
        if folds < 2 {
            return Err(invalid("folds must be at least 2"));
        }
        if s.n == Some(0) {
            return Err(invalid("n must be positive"));
        }
        Ok(RunConfig {
            manifest: s.manifest,
            out_dir: s.out_dir.unwrap_or_else(|| PathBuf::from("emosid-out")),
            plan,
            alpha: alpha(s.alpha.unwrap_or(FusionWeight::default().value()))?,
            compare_alpha: s.compare_alpha.map(alpha).transpose()?,
            n: s.n,
            seed,
            execution,
            topology,
            features,
            training,
            folds,
            synth,
        })
    }

    pub fn manifest_path(&self) -> anyhow::Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| invalid("no manifest given (set `manifest` or --manifest)"))
    }

    pub fn feature_dir(&self) -> PathBuf {
        self.out_dir.join("features")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("models").join(self.plan.slug())
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("reports").join(self.plan.slug())
    }
}
