use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use emosid::corpus::{generate_synthetic_corpus, load_manifest, read_audio, CorpusManifest, ProtocolCounts};
use emosid::features::{self, FeatureExtractor};
use emosid::protocol::{self, feature_path, FeatureFiles};
use emosid::report::{self, ComparisonRow};
use emosid::sphmm::{DualObservation, SpeakerModel};

use crate::config::RunConfig;

/// Writes `contents` unless the file already holds exactly that.
fn write_if_changed(path: &Path, contents: &str) -> Result<bool> {
    if fs::read_to_string(path).is_ok_and(|old| old == contents) {
        return Ok(false);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(true)
}

fn load(cfg: &RunConfig) -> Result<CorpusManifest> {
    Ok(load_manifest(cfg.manifest_path()?)?)
}

fn source(cfg: &RunConfig, manifest: &CorpusManifest) -> FeatureFiles {
    FeatureFiles::for_manifest(manifest, Some(cfg.feature_dir()), cfg.features.prosody.block_size)
}

fn up_to_date(target: &Path, source: &Path) -> bool {
    let modified = |p: &Path| fs::metadata(p).and_then(|m| m.modified()).ok();
    match (modified(target), modified(&features::prosody_path(target)), modified(source)) {
        (Some(a), Some(p), Some(s)) => a >= s && p >= s,
        _ => false,
    }
}

const EXTRACT_CHUNK: usize = 256;

pub fn extract(cfg: &RunConfig) -> Result<()> {
    let manifest = load(cfg)?;
    let dir = cfg.feature_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let params = format!("{:#?}\nsample_rate {}\n", cfg.features, manifest.sample_rate);
    let params_changed = write_if_changed(&dir.join("params.txt"), &params)?;
    let extractor = FeatureExtractor::new(&cfg.features, manifest.sample_rate)?;

    let audio: Vec<_> = manifest.records.iter().filter(|r| r.is_audio()).collect();
    let mut index = String::from("key,source,features\n");
    let mut pending = Vec::new();
    for r in &audio {
        let target = feature_path(&dir, &r.key());
        index.push_str(&format!("{},{},{}\n", r.key(), r.source.display(), target.display()));
        if params_changed || !up_to_date(&target, &manifest.resolve(&r.source)) {
            pending.push((*r, target));
        }
    }

    let (mut written, mut failed) = (0usize, 0usize);
    for chunk in pending.chunks(EXTRACT_CHUNK) {
        let results = cfg.execution.map(chunk, |(r, _)| -> Result<DualObservation> {
            let signal = read_audio(&manifest.resolve(&r.source))?;
            Ok(extractor.extract(&signal, &r.key().to_string())?)
        });
        // Writes stay on this thread.
        for ((r, target), result) in chunk.iter().zip(results) {
            match result.and_then(|obs| Ok(features::write_observation(&obs, target)?)) {
                Ok(()) => written += 1,
                Err(e) => {
                    failed += 1;
                    eprintln!("extract {}: {e:#}", r.key());
                }
            }
        }
    }
    write_if_changed(&dir.join("index.csv"), &index)?;
    println!(
        "extract: {} audio utterances, {written} extracted, {} up to date, {failed} failed",
        audio.len(),
        audio.len() - pending.len()
    );
    if failed > 0 {
        bail!("{failed} utterances failed feature extraction");
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let manifest = load(cfg)?;
    let models = protocol::train_population(&manifest, cfg.plan, &source(cfg, &manifest), &cfg.topology, &cfg.training)?;
    let dir = cfg.model_dir();
    for m in &models {
        write_if_changed(&dir.join(format!("{}.model", m.speaker_id)), &m.to_text())?;
    }
    println!("train: {} models for plan {} in {}", models.len(), cfg.plan, dir.display());
    Ok(())
}

fn load_models(cfg: &RunConfig, speakers: Option<&[String]>) -> Result<Vec<SpeakerModel>> {
    let dir = cfg.model_dir();
    let paths: Vec<PathBuf> = match speakers {
        Some(ids) => ids.iter().map(|s| dir.join(format!("{s}.model"))).collect(),
        None => {
            let mut found: Vec<PathBuf> = fs::read_dir(&dir)
                .with_context(|| format!("reading model directory {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "model"))
                .collect();
            found.sort();
            found
        }
    };
    if paths.is_empty() {
        bail!("no models in {} (run `emosid train` first)", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("missing model {}", p.display()))?;
            SpeakerModel::from_text(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

pub fn identify(cfg: &RunConfig, input: &Path) -> Result<()> {
    let models = load_models(cfg, None)?;
    let obs = if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
        let signal = read_audio(input)?;
        FeatureExtractor::new(&cfg.features, signal.sample_rate)?.extract(&signal, &input.display().to_string())?
    } else {
        features::read_observation(input, cfg.features.prosody.block_size)?
    };
    let result = protocol::identify(&models, &obs, cfg.alpha)?;
    println!("identified: {}", result.identified_speaker);
    for (speaker, score) in result.top(3) {
        println!("  {speaker} {score:.6}");
    }
    Ok(())
}

fn kappa_text(k: Option<f64>) -> String {
    match k {
        Some(k) => {
            let note = emosid::stats::kappa_band_note(k).map(|n| format!(" ({n})")).unwrap_or_default();
            format!("{k:.4} {}{note}", emosid::stats::kappa_band(k))
        }
        None => "undefined".into(),
    }
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let manifest = load(cfg)?;
    let speakers = manifest.speakers();
    let models = load_models(cfg, Some(&speakers))?;
    let scored = protocol::score_session(&manifest, cfg.plan, &models, &source(cfg, &manifest), cfg.execution)?;
    let outcome = scored.decide(cfg.alpha)?;
    let dir = cfg.report_dir();
    write_if_changed(&dir.join("performance.csv"), &report::performance_csv(&outcome.table))?;
    write_if_changed(&dir.join("raw_log.csv"), &report::raw_log(&outcome.log))?;
    let kappa = report::session_kappa(&outcome).ok();

    let mut summary = format!(
        "plan {}\nalpha {}\nscore log p(O|model) + log prior per stream, evidence term omitted\nidentifications {}\ngrand_average {:.2}\nkappa {}\n",
        cfg.plan,
        cfg.alpha.value(),
        outcome.log.len(),
        outcome.table.grand_average().unwrap_or(0.0),
        kappa_text(kappa)
    );

    if let Some(other) = cfg.compare_alpha {
        let second = scored.decide(other)?;
        write_if_changed(&dir.join("comparison_performance.csv"), &report::performance_csv(&second.table))?;
        let n = cfg
            .n
            .unwrap_or_else(|| ProtocolCounts::for_emotions(manifest.emotions()).test_per_speaker());
        let name = format!("{} alpha {} vs alpha {}", cfg.plan, cfg.alpha.value(), other.value());
        let mut row = ComparisonRow::from_tables(&name, &outcome.table, &second.table, n)?;
        row.kappa = kappa;
        write_if_changed(&dir.join("stats.csv"), &report::stats_report(&[row.clone()]))?;
        summary.push_str(&format!(
            "compare_alpha {}\ncompare_grand_average {:.2}\nt {}\n",
            other.value(),
            second.table.grand_average().unwrap_or(0.0),
            row.t.map_or_else(|| "undefined".into(), |t| format!("{t:.3}"))
        ));
    }
    write_if_changed(&dir.join("summary.txt"), &summary)?;
    print!("{}", report::performance_csv(&outcome.table));
    print!("{summary}");
    Ok(())
}

pub fn xval(cfg: &RunConfig) -> Result<()> {
    let manifest = load(cfg)?;
    let cv = protocol::cross_validate(
        &manifest,
        cfg.plan,
        cfg.folds,
        cfg.seed,
        &source(cfg, &manifest),
        &cfg.topology,
        &cfg.training,
        cfg.alpha,
    )?;
    let text = report::xval_report(&cv);
    write_if_changed(&cfg.report_dir().join("xval.csv"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let manifest = generate_synthetic_corpus(&cfg.synth, &cfg.out_dir)?;
    let path = cfg.out_dir.join("manifest.csv");
    println!("synth: {} utterances, manifest {}", manifest.records.len(), path.display());
    if manifest.records.is_empty() {
        return Err(anyhow!("empty synthetic corpus"));
    }
    Ok(())
}
