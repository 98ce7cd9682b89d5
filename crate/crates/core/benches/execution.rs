//! Sequential against data-parallel execution on the three hot loops: the
//! Baum-Welch E-step, session scoring and feature extraction.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use emosid::corpus::{synthesize, AudioSignal, Emotion, SynthConfig, TrainingPlan};
use emosid::features::{FeatureConfig, FeatureExtractor};
use emosid::hmm::{init_model, SufficientStats, TrainingConfig};
use emosid::protocol::{score_session, train_population, InMemoryFeatures};
use emosid::sphmm::Topology;
use emosid::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus() -> (emosid::corpus::CorpusManifest, InMemoryFeatures) {
    let c = synthesize(&SynthConfig {
        n_speakers: 6,
        emotions: vec![Emotion::Neutral, Emotion::Angry],
        include_biased: false,
        frames: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    (c.manifest, InMemoryFeatures { observations: c.observations })
}

fn e_step(c: &mut Criterion) {
    let (_, source) = corpus();
    let data: Vec<Vec<Vec<f64>>> = source
        .observations
        .values()
        .take(96)
        .map(|o| o.acoustic.frames.clone())
        .collect();
    let model = init_model(&data, 9, 10, 1, 1e-6).unwrap();
    let mut group = c.benchmark_group("e_step_9x10");
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| SufficientStats::collect(&model, &data, exec))
        });
    }
    group.finish();
}

fn session_scoring(c: &mut Criterion) {
    let (manifest, source) = corpus();
    let topology = Topology {
        acoustic_mixtures: 4,
        ..Topology::default()
    };
    let cfg = TrainingConfig {
        max_iterations: 3,
        ..TrainingConfig::default()
    };
    let models = train_population(&manifest, TrainingPlan::Unbiased, &source, &topology, &cfg).unwrap();
    let mut group = c.benchmark_group("session_scoring");
    group.sample_size(20);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| score_session(&manifest, TrainingPlan::Unbiased, &models, &source, exec).unwrap())
        });
    }
    group.finish();
}

fn feature_extraction(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let signals: Vec<AudioSignal> = (0..32)
        .map(|_| {
            let f0 = rng.random_range(90.0..300.0);
            let samples = (0..8000)
                .map(|i| {
                    let t = i as f64 / 16_000.0;
                    (6000.0 * (2.0 * std::f64::consts::PI * f0 * t).sin() + rng.random_range(-300.0..300.0)) as i16
                })
                .collect();
            AudioSignal::new(samples, 16_000).unwrap()
        })
        .collect();
    let extractor = FeatureExtractor::new(&FeatureConfig::default(), 16_000).unwrap();
    let mut group = c.benchmark_group("feature_extraction");
    group.sample_size(20);
    for (name, exec) in STRATEGIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| exec.map(&signals, |s| extractor.extract(s, "bench").unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, e_step, session_scoring, feature_extraction);
criterion_main!(benches);
