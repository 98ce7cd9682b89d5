use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emosid::corpus::{
    read_feature_file, write_audio, write_manifest, AudioSignal, BiasTag, CorpusManifest, Emotion, Gender, Session,
    UtteranceRecord,
};

fn emosid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emosid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run emosid")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &str = r#"
out_dir = "out"
manifest = "out/manifest.csv"
speakers = 3
emotions = "neutral,angry"
frames = 30
acoustic_states = 3
acoustic_mixtures = 2
suprasegmental_mixtures = 1
max_iterations = 4
seed = 5
"#;

fn small_corpus() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    ok(&emosid(dir.path(), &["synth", "--config", "run.toml"]));
    dir
}

fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    entries.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect()
}

#[test]
fn train_and_evaluate_are_deterministic() {
    let dir = small_corpus();
    let p = dir.path();
    ok(&emosid(p, &["train", "--config", "run.toml", "--plan", "biased:angry"]));
    let first = read_dir_sorted(&p.join("out/models/biased-angry"));
    assert_eq!(first.len(), 3);
    ok(&emosid(p, &["evaluate", "--config", "run.toml", "--plan", "biased:angry", "--compare_alpha", "0"]));
    let reports = p.join("out/reports/biased-angry");
    let perf = fs::read_to_string(reports.join("performance.csv")).unwrap();
    let stats = fs::read_to_string(reports.join("stats.csv")).unwrap();

    ok(&emosid(p, &["train", "--config", "run.toml", "--plan", "biased:angry", "--execution", "sequential"]));
    assert_eq!(read_dir_sorted(&p.join("out/models/biased-angry")), first);
    ok(&emosid(p, &["evaluate", "--config", "run.toml", "--plan", "biased:angry", "--compare_alpha", "0"]));
    assert_eq!(fs::read_to_string(reports.join("performance.csv")).unwrap(), perf);
    assert_eq!(fs::read_to_string(reports.join("stats.csv")).unwrap(), stats);

    let lines: Vec<&str> = perf.lines().collect();
    assert_eq!(lines[0], "Emotion,Males(%),Females(%),Average(%)");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("Grand average,,,"));
    assert_eq!(stats.lines().count(), 2);
    assert!(stats.lines().nth(1).unwrap().starts_with("biased:angry alpha 0.5 vs alpha 0,"));
    let raw = fs::read_to_string(reports.join("raw_log.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 3 * 2 * 5 * 6);
}

#[test]
fn neutral_bias_trains_the_unbiased_plan() {
    let dir = small_corpus();
    let p = dir.path();
    ok(&emosid(p, &["train", "--config", "run.toml", "--plan", "biased:neutral"]));
    let neutral = read_dir_sorted(&p.join("out/models/unbiased"));
    fs::remove_dir_all(p.join("out/models")).unwrap();
    ok(&emosid(p, &["train", "--config", "run.toml", "--plan", "unbiased"]));
    assert_eq!(read_dir_sorted(&p.join("out/models/unbiased")), neutral);
}

#[test]
fn xval_report_shape() {
    let dir = small_corpus();
    let p = dir.path();
    ok(&emosid(p, &["xval", "--config", "run.toml", "--folds", "5"]));
    let text = fs::read_to_string(p.join("out/reports/unbiased/xval.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "fold,test_size,grand_average(%)");
    assert_eq!(rows.len(), 7);
    assert!(rows[6].starts_with("sd,,"));
    let again = emosid(p, &["xval", "--config", "run.toml", "--folds", "5"]);
    ok(&again);
    assert_eq!(fs::read_to_string(p.join("out/reports/unbiased/xval.csv")).unwrap(), text);
}

#[test]
fn identify_one_feature_file() {
    let dir = small_corpus();
    let p = dir.path();
    ok(&emosid(p, &["train", "--config", "run.toml"]));
    let out = emosid(
        p,
        &["identify", "--config", "run.toml", "--input", "out/features/spk02_angry_unbiased_s3_r12.lfpc"],
    );
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("identified: spk"), "{stdout}");
    assert_eq!(stdout.lines().count(), 4);
}

fn one_record_manifest(dir: &Path, seconds: f64) -> PathBuf {
    let n = (16_000.0 * seconds) as usize;
    let samples = (0..n)
        .map(|i| (8000.0 * (2.0 * std::f64::consts::PI * 180.0 * i as f64 / 16_000.0).sin()) as i16)
        .collect();
    write_audio(&AudioSignal::new(samples, 16_000).unwrap(), &dir.join("a.wav")).unwrap();
    let record = UtteranceRecord {
        speaker_id: "spk01".into(),
        gender: Gender::Female,
        emotion: Emotion::Happy,
        sentence_id: 2,
        bias_tag: BiasTag::Unbiased,
        session: Session::Train,
        repetition: 4,
        source: "a.wav".into(),
    };
    let path = dir.join("m.csv");
    write_manifest(&CorpusManifest::new(vec![record], 16_000), &path).unwrap();
    path
}

#[test]
fn extract_is_idempotent_and_frames_match() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    one_record_manifest(p, 1.0);
    ok(&emosid(p, &["extract", "--manifest", "m.csv", "--out_dir", "out"]));
    let feature = p.join("out/features/spk01_happy_unbiased_s2_r04.lfpc");
    let matrix = read_feature_file(&feature).unwrap();
    assert_eq!((matrix.rows.len(), matrix.columns), (195, 16));
    let before: Vec<_> = read_dir_sorted(&p.join("out/features"))
        .into_iter()
        .map(|(path, bytes)| (fs::metadata(&path).unwrap().modified().unwrap(), path, bytes))
        .collect();
    let again = emosid(p, &["extract", "--manifest", "m.csv", "--out_dir", "out"]);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 extracted, 1 up to date"));
    let after: Vec<_> = read_dir_sorted(&p.join("out/features"))
        .into_iter()
        .map(|(path, bytes)| (fs::metadata(&path).unwrap().modified().unwrap(), path, bytes))
        .collect();
    assert_eq!(before, after);
}

#[test]
fn empty_manifest_extracts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_manifest(&CorpusManifest::new(Vec::new(), 16_000), &p.join("m.csv")).unwrap();
    let out = emosid(p, &["extract", "--manifest", "m.csv", "--out_dir", "out"]);
    ok(&out);
    let feature_files = fs::read_dir(p.join("out/features"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "lfpc"))
        .count();
    assert_eq!(feature_files, 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(emosid(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(emosid(p, &["train", "--alpha", "1.5", "--manifest", "m.csv"]).status.code(), Some(1));
    assert_eq!(emosid(p, &["train", "--plan", "biased:bored"]).status.code(), Some(1));
    fs::write(p.join("bad.toml"), "no_such_key = 3\n").unwrap();
    assert_eq!(emosid(p, &["train", "--config", "bad.toml"]).status.code(), Some(1));
    fs::write(p.join("m.csv"), "speaker_id,gender,emotion,sentence_id,bias_tag,session,repetition,source\nspk01,male,bored,1,unbiased,train,1,a.wav\n").unwrap();
    assert_eq!(emosid(p, &["extract", "--manifest", "m.csv"]).status.code(), Some(1));
    // Protocol counts fail: one utterance cannot fill a training plan.
    one_record_manifest(p, 0.2);
    assert_eq!(emosid(p, &["train", "--manifest", "m.csv"]).status.code(), Some(1));
    assert_eq!(emosid(p, &["evaluate", "--manifest", "missing.csv"]).status.code(), Some(2));
    assert_eq!(emosid(p, &["--help"]).status.code(), Some(0));
}
