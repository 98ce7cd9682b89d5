//! Experimental machinery: training-set assembly per talking environment,
//! closed-set identification, evaluation sessions and k-fold
//! cross-validation.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    validate_protocol_counts, CorpusManifest, Emotion, Gender, ProtocolCounts, Session, UtteranceKey, UtteranceRecord,
};
use crate::hmm::TrainingConfig;
use crate::sphmm::{register_population, train_speaker_model, DualObservation, FusionWeight, SpeakerModel, StreamScores, Topology};
use crate::{features, stats, Error, Execution, Result};

pub use crate::corpus::TrainingPlan;

/// Protocol counts implied by the emotions present in a manifest.
pub fn counts_for(manifest: &CorpusManifest) -> ProtocolCounts {
    ProtocolCounts::for_emotions(manifest.emotions())
}

fn speaker_cells_complete(manifest: &CorpusManifest, plan: TrainingPlan, speaker: &str, session: Session) -> Result<()> {
    if let TrainingPlan::Biased(e) = plan {
        if !manifest.emotions().contains(&e) {
            return Err(Error::Protocol(format!("plan {plan}: corpus has no {e} recordings")));
        }
    }
    let report = validate_protocol_counts(manifest, plan, &counts_for(manifest));
    let deficits: Vec<String> = report
        .deficits
        .iter()
        .filter(|d| d.speaker_id == speaker && d.session == session)
        .map(|d| d.to_string())
        .collect();
    if deficits.is_empty() {
        Ok(())
    } else {
        Err(Error::Protocol(format!(
            "plan {plan} unsatisfiable for {speaker}: {}",
            deficits.join("; ")
        )))
    }
}

/// Training-session utterances of `speaker` under `plan`: for every emotion,
/// the sentence set the plan assigns to it.
pub fn assemble_training_set<'a>(
    manifest: &'a CorpusManifest,
    plan: TrainingPlan,
    speaker: &str,
) -> Result<Vec<&'a UtteranceRecord>> {
    if manifest.gender_of(speaker).is_none() {
        return Err(Error::Protocol(format!("speaker {speaker} not in manifest")));
    }
    speaker_cells_complete(manifest, plan, speaker, Session::Train)?;
    Ok(manifest
        .records
        .iter()
        .filter(|r| r.speaker_id == speaker && r.session == Session::Train && plan.includes(r))
        .collect())
}

/// Test-session utterances of every speaker, selected with the same sentence
/// sets as training.
pub fn assemble_test_set(manifest: &CorpusManifest, plan: TrainingPlan) -> Result<Vec<&UtteranceRecord>> {
    let report = validate_protocol_counts(manifest, plan, &counts_for(manifest));
    let missing: Vec<String> = report
        .deficits
        .iter()
        .filter(|d| d.session == Session::Test)
        .take(5)
        .map(|d| d.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Protocol(format!("missing test utterances for plan {plan}: {}", missing.join("; "))));
    }
    let mut set: Vec<&UtteranceRecord> = manifest
        .records
        .iter()
        .filter(|r| r.session == Session::Test && plan.includes(r))
        .collect();
    set.sort_by_key(|r| r.key());
    Ok(set)
}

/// Where observations of a record come from.
pub trait FeatureSource: Sync {
    fn observation(&self, record: &UtteranceRecord) -> Result<Cow<'_, DualObservation>>;
}

/// Reads feature files. Records pointing at audio map to
/// `<feature_dir>/<key>.lfpc`; records pointing at feature files are read
/// directly.
#[derive(Debug, Clone)]
pub struct FeatureFiles {
    pub base_dir: PathBuf,
    pub feature_dir: Option<PathBuf>,
    pub block_size: usize,
}

impl FeatureFiles {
    pub fn for_manifest(manifest: &CorpusManifest, feature_dir: Option<PathBuf>, block_size: usize) -> Self {
        FeatureFiles {
            base_dir: manifest.base_dir.clone(),
            feature_dir,
            block_size,
        }
    }

    pub fn path_for(&self, record: &UtteranceRecord) -> Result<PathBuf> {
        if record.is_audio() {
            let dir = self.feature_dir.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("{}: audio source but no feature directory", record.key()))
            })?;
            Ok(feature_path(dir, &record.key()))
        } else if record.source.is_absolute() {
            Ok(record.source.clone())
        } else {
            Ok(self.base_dir.join(&record.source))
        }
    }
}

/// Acoustic feature file of an utterance inside a feature directory.
pub fn feature_path(dir: &Path, key: &UtteranceKey) -> PathBuf {
    dir.join(format!("{key}.{}", features::LFPC_EXTENSION))
}

impl FeatureSource for FeatureFiles {
    fn observation(&self, record: &UtteranceRecord) -> Result<Cow<'_, DualObservation>> {
        features::read_observation(&self.path_for(record)?, self.block_size).map(Cow::Owned)
    }
}

/// Observations held in memory, keyed by utterance.
#[derive(Debug, Clone, Default)]
pub struct InMemoryFeatures {
    pub observations: HashMap<UtteranceKey, DualObservation>,
}

impl FeatureSource for InMemoryFeatures {
    fn observation(&self, record: &UtteranceRecord) -> Result<Cow<'_, DualObservation>> {
        self.observations
            .get(&record.key())
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::InsufficientData(format!("no observation for {}", record.key())))
    }
}

/// SplitMix64 finalizer; derives independent seeds for numbered sub-streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one model per speaker from the records `select` returns, in
/// sorted speaker order, then assigns uniform priors.
fn train_models<'a, F>(
    speakers: &[String],
    select: F,
    source: &dyn FeatureSource,
    topology: &Topology,
    cfg: &TrainingConfig,
) -> Result<Vec<SpeakerModel>>
where
    F: Fn(&str) -> Result<Vec<&'a UtteranceRecord>> + Sync,
{
    cfg.validate()?;
    topology.validate()?;
    let jobs: Vec<(usize, &String)> = speakers.iter().enumerate().collect();
    let mut models = cfg.execution.try_map(&jobs, |&(ordinal, speaker)| {
        let records = select(speaker)?;
        let observations = records
            .iter()
            .map(|r| source.observation(r))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DualObservation> = observations.iter().map(|o| o.as_ref()).collect();
        let speaker_cfg = TrainingConfig {
            seed: derive_seed(cfg.seed, ordinal as u64),
            ..cfg.clone()
        };
        train_speaker_model(speaker, &refs, topology, &speaker_cfg)
    })?;
    register_population(&mut models);
    Ok(models)
}

/// Trains every speaker of the manifest under `plan`.
pub fn train_population(
    manifest: &CorpusManifest,
    plan: TrainingPlan,
    source: &dyn FeatureSource,
    topology: &Topology,
    cfg: &TrainingConfig,
) -> Result<Vec<SpeakerModel>> {
    let speakers = manifest.speakers();
    if speakers.len() < 2 {
        return Err(Error::Protocol(format!("need at least two speakers, found {}", speakers.len())));
    }
    train_models(&speakers, |s| assemble_training_set(manifest, plan, s), source, topology, cfg)
}

/// Index of the highest score; exact ties go to the lexicographically
/// smallest speaker id.
pub fn decide(speaker_ids: &[&str], scores: &[f64]) -> Result<usize> {
    if speaker_ids.is_empty() {
        return Err(Error::InvalidArgument("no speaker models registered".into()));
    }
    if speaker_ids.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: speaker_ids.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numerical(format!("NaN score for {}", speaker_ids[i])));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && speaker_ids[i] < speaker_ids[best]) {
            best = i;
        }
    }
    Ok(best)
}

/// One closed-set decision.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub key: String,
    pub true_speaker: String,
    pub identified_speaker: String,
    /// Speaker ids and fused log scores, in model order.
    pub scores: Vec<(String, f64)>,
}

impl IdentificationResult {
    pub fn correct(&self) -> bool {
        self.true_speaker == self.identified_speaker
    }

    /// The `n` best (speaker, score) pairs, best first.
    pub fn top(&self, n: usize) -> Vec<(&str, f64)> {
        let mut ranked: Vec<(&str, f64)> = self.scores.iter().map(|(s, v)| (s.as_str(), *v)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(n);
        ranked
    }
}

fn decide_scores(models: &[SpeakerModel], scores: Vec<f64>, key: String, true_speaker: String) -> Result<IdentificationResult> {
    let ids: Vec<&str> = models.iter().map(|m| m.speaker_id.as_str()).collect();
    let best = decide(&ids, &scores)?;
    Ok(IdentificationResult {
        key,
        true_speaker,
        identified_speaker: ids[best].to_string(),
        scores: ids.iter().map(|s| s.to_string()).zip(scores).collect(),
    })
}

/// Picks the registered speaker with the highest fused score for `obs`.
/// `true_speaker` and `key` are left empty.
pub fn identify(models: &[SpeakerModel], obs: &DualObservation, alpha: FusionWeight) -> Result<IdentificationResult> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no speaker models registered".into()));
    }
    let scores = models
        .iter()
        .map(|m| m.stream_scores(obs).map(|s| s.fused(alpha)))
        .collect::<Result<Vec<_>>>()?;
    decide_scores(models, scores, String::new(), String::new())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn percentage(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

/// Correct-identification rates by emotion and gender.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerformanceTable {
    cells: BTreeMap<(Emotion, Gender), Tally>,
}

impl PerformanceTable {
    pub fn record(&mut self, emotion: Emotion, gender: Gender, correct: bool) {
        let t = self.cells.entry((emotion, gender)).or_default();
        t.total += 1;
        t.correct += correct as usize;
    }

    pub fn merge(&mut self, other: &PerformanceTable) {
        for (k, t) in &other.cells {
            let mine = self.cells.entry(*k).or_default();
            mine.correct += t.correct;
            mine.total += t.total;
        }
    }

    pub fn tally(&self, emotion: Emotion, gender: Gender) -> Tally {
        self.cells.get(&(emotion, gender)).copied().unwrap_or_default()
    }

    pub fn percentage(&self, emotion: Emotion, gender: Gender) -> Option<f64> {
        self.tally(emotion, gender).percentage()
    }

    /// Emotions with at least one identification, in report order.
    pub fn emotions(&self) -> Vec<Emotion> {
        Emotion::ALL
            .into_iter()
            .filter(|e| self.cells.keys().any(|(c, _)| c == e))
            .collect()
    }

    /// Mean of the emotion's gender cells.
    pub fn emotion_average(&self, emotion: Emotion) -> Option<f64> {
        let cells: Vec<f64> = [Gender::Male, Gender::Female]
            .iter()
            .filter_map(|&g| self.percentage(emotion, g))
            .collect();
        stats::mean(&cells).ok()
    }

    pub fn emotion_averages(&self) -> Vec<f64> {
        self.emotions()
            .into_iter()
            .filter_map(|e| self.emotion_average(e))
            .collect()
    }

    /// Mean of the per-emotion averages.
    pub fn grand_average(&self) -> Option<f64> {
        stats::mean(&self.emotion_averages()).ok()
    }

    pub fn total(&self) -> usize {
        self.cells.values().map(|t| t.total).sum()
    }
}

/// Per-model stream scores of one test utterance, before fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUtterance {
    pub key: String,
    pub true_speaker: String,
    pub emotion: Emotion,
    pub gender: Gender,
    pub scores: Vec<StreamScores>,
}

/// Stream scores for every test utterance of a session; fusion weights are
/// applied afterwards so several weights can share one scoring pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSession {
    pub plan: TrainingPlan,
    pub speakers: Vec<String>,
    pub utterances: Vec<ScoredUtterance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub plan: TrainingPlan,
    pub alpha: FusionWeight,
    pub table: PerformanceTable,
    pub log: Vec<IdentificationResult>,
}

fn check_population(models: &[SpeakerModel], manifest_speakers: &[String]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::Protocol(format!("need at least two speaker models, found {}", models.len())));
    }
    for s in manifest_speakers {
        if !models.iter().any(|m| &m.speaker_id == s) {
            return Err(Error::Protocol(format!("no model for speaker {s}")));
        }
    }
    Ok(())
}

fn score_records(
    records: &[&UtteranceRecord],
    models: &[SpeakerModel],
    manifest: &CorpusManifest,
    source: &dyn FeatureSource,
    exec: Execution,
) -> Result<Vec<ScoredUtterance>> {
    exec.try_map(records, |r| {
        let obs = source.observation(r)?;
        let scores = models
            .iter()
            .map(|m| m.stream_scores(&obs))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoredUtterance {
            key: r.key().to_string(),
            true_speaker: r.speaker_id.clone(),
            emotion: r.emotion,
            gender: manifest.gender_of(&r.speaker_id).unwrap_or(r.gender),
            scores,
        })
    })
}

/// Scores every test utterance of `plan` against every model.
pub fn score_session(
    manifest: &CorpusManifest,
    plan: TrainingPlan,
    models: &[SpeakerModel],
    source: &dyn FeatureSource,
    exec: Execution,
) -> Result<ScoredSession> {
    check_population(models, &manifest.speakers())?;
    let records = assemble_test_set(manifest, plan)?;
    Ok(ScoredSession {
        plan,
        speakers: models.iter().map(|m| m.speaker_id.clone()).collect(),
        utterances: score_records(&records, models, manifest, source, exec)?,
    })
}

impl ScoredSession {
    /// Fuses with `alpha` and decides every utterance.
    pub fn decide(&self, alpha: FusionWeight) -> Result<SessionOutcome> {
        let ids: Vec<&str> = self.speakers.iter().map(String::as_str).collect();
        let mut table = PerformanceTable::default();
        let mut log = Vec::with_capacity(self.utterances.len());
        for u in &self.utterances {
            let fused: Vec<f64> = u.scores.iter().map(|s| s.fused(alpha)).collect();
            let best = decide(&ids, &fused)?;
            let result = IdentificationResult {
                key: u.key.clone(),
                true_speaker: u.true_speaker.clone(),
                identified_speaker: ids[best].to_string(),
                scores: ids.iter().map(|s| s.to_string()).zip(fused).collect(),
            };
            table.record(u.emotion, u.gender, result.correct());
            log.push(result);
        }
        Ok(SessionOutcome {
            plan: self.plan,
            alpha,
            table,
            log,
        })
    }
}

/// Identifies every test utterance of `plan` and tabulates the outcome.
pub fn run_session(
    manifest: &CorpusManifest,
    plan: TrainingPlan,
    models: &[SpeakerModel],
    alpha: FusionWeight,
    source: &dyn FeatureSource,
    exec: Execution,
) -> Result<SessionOutcome> {
    score_session(manifest, plan, models, source, exec)?.decide(alpha)
}

/// Fold index of each of `n` items: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
pub fn partition(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        folds[item] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    pub table: PerformanceTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub plan: TrainingPlan,
    pub folds: Vec<FoldResult>,
}

impl CrossValidation {
    pub fn fold_averages(&self) -> Vec<f64> {
        self.folds
            .iter()
            .map(|f| f.table.grand_average().unwrap_or(0.0))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.fold_averages()).unwrap_or(0.0)
    }

    /// Sample standard deviation of the fold grand averages.
    pub fn sd(&self) -> f64 {
        stats::sample_sd(&self.fold_averages()).unwrap_or(0.0)
    }
}

/// Every utterance `plan` selects, from both sessions, in key order.
pub fn plan_universe(manifest: &CorpusManifest, plan: TrainingPlan) -> Vec<&UtteranceRecord> {
    let mut all: Vec<&UtteranceRecord> = manifest.records.iter().filter(|r| plan.includes(r)).collect();
    all.sort_by_key(|r| r.key());
    all
}

/// Splits the plan's utterances into `k` random subsets. Each subset in
/// turn is the test set for models retrained on the other `k - 1`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    manifest: &CorpusManifest,
    plan: TrainingPlan,
    k: usize,
    seed: u64,
    source: &dyn FeatureSource,
    topology: &Topology,
    cfg: &TrainingConfig,
    alpha: FusionWeight,
) -> Result<CrossValidation> {
    let universe = plan_universe(manifest, plan);
    let folds = partition(universe.len(), k, seed)?;
    let speakers = manifest.speakers();
    if speakers.len() < 2 {
        return Err(Error::Protocol(format!("need at least two speakers, found {}", speakers.len())));
    }
    for fold in 0..k {
        for s in &speakers {
            let (mut test, mut train) = (0, 0);
            for (r, &f) in universe.iter().zip(&folds) {
                if &r.speaker_id == s {
                    if f == fold {
                        test += 1;
                    } else {
                        train += 1;
                    }
                }
            }
            if test == 0 || train == 0 {
                return Err(Error::Protocol(format!(
                    "corpus too small for {k} folds: speaker {s} has {test} test and {train} training utterances in fold {}",
                    fold + 1
                )));
            }
        }
    }

    let mut results = Vec::with_capacity(k);
    for fold in 0..k {
        let fold_cfg = TrainingConfig {
            seed: derive_seed(cfg.seed, 1_000_000 + fold as u64),
            ..cfg.clone()
        };
        let select = |speaker: &str| -> Result<Vec<&UtteranceRecord>> {
            Ok(universe
                .iter()
                .zip(&folds)
                .filter(|(r, &f)| f != fold && r.speaker_id == speaker)
                .map(|(r, _)| *r)
                .collect())
        };
        let models = train_models(&speakers, select, source, topology, &fold_cfg)?;
        let test: Vec<&UtteranceRecord> = universe
            .iter()
            .zip(&folds)
            .filter(|(_, &f)| f == fold)
            .map(|(r, _)| *r)
            .collect();
        let session = ScoredSession {
            plan,
            speakers: models.iter().map(|m| m.speaker_id.clone()).collect(),
            utterances: score_records(&test, &models, manifest, source, cfg.execution)?,
        };
        let outcome = session.decide(alpha)?;
        results.push(FoldResult {
            fold,
            test_size: test.len(),
            table: outcome.table,
        });
    }
    Ok(CrossValidation { plan, folds: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::full_records;
    use crate::corpus::BiasTag;
    use crate::prosody::{ProsodicVector, SuprasegmentalSequence};
    use crate::dsp::LfpcSequence;
    use proptest::prelude::*;
    use rand::Rng;

    fn paper_manifest(speakers: usize) -> CorpusManifest {
        CorpusManifest::new(full_records(speakers, &Emotion::ALL, true), 16_000)
    }

    #[test]
    fn unbiased_training_set_is_270() {
        let m = paper_manifest(3);
        let set = assemble_training_set(&m, TrainingPlan::Unbiased, "spk01").unwrap();
        assert_eq!(set.len(), 270);
        assert!(set.iter().all(|r| r.bias_tag == BiasTag::Unbiased && r.session == Session::Train));
    }

    #[test]
    fn biased_training_set_composition() {
        let m = paper_manifest(2);
        for e in Emotion::ALL.into_iter().skip(1) {
            let set = assemble_training_set(&m, TrainingPlan::biased(e), "spk02").unwrap();
            assert_eq!(set.len(), 270);
            assert_eq!(set.iter().filter(|r| r.bias_tag == BiasTag::Biased(e)).count(), 45);
            assert_eq!(set.iter().filter(|r| r.bias_tag == BiasTag::Unbiased).count(), 225);
            assert!(!set.iter().any(|r| r.emotion == e && r.bias_tag == BiasTag::Unbiased));
        }
    }

    #[test]
    fn biased_neutral_is_unbiased() {
        let m = paper_manifest(2);
        let a = assemble_training_set(&m, TrainingPlan::biased(Emotion::Neutral), "spk01").unwrap();
        let b = assemble_training_set(&m, TrainingPlan::Unbiased, "spk01").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn biased_plan_without_biased_recordings_fails() {
        let m = CorpusManifest::new(full_records(2, &Emotion::ALL, false), 16_000);
        let err = assemble_training_set(&m, TrainingPlan::Biased(Emotion::Angry), "spk01").unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        assert!(assemble_training_set(&m, TrainingPlan::Unbiased, "spk09").is_err());
    }

    #[test]
    fn paper_scale_session_counts() {
        let m = paper_manifest(50);
        for plan in [TrainingPlan::Unbiased, TrainingPlan::Biased(Emotion::Fear)] {
            assert_eq!(assemble_test_set(&m, plan).unwrap().len(), 9000);
        }
        assert_eq!(plan_universe(&m, TrainingPlan::Unbiased).len(), 22_500);
    }

    #[test]
    fn decision_rule() {
        let ids = ["A", "B", "C"];
        assert_eq!(decide(&ids, &[-100.0, -90.0, -95.0]).unwrap(), 1);
        assert_eq!(decide(&ids, &[-90.0, -90.0, -95.0]).unwrap(), 0);
        assert_eq!(decide(&["B", "A"], &[-1.0, -1.0]).unwrap(), 1);
        assert_eq!(decide(&ids, &[-93.0, -83.0, -88.0]).unwrap(), 1);
        assert!(decide(&[], &[]).is_err());
        assert!(decide(&ids, &[0.0, f64::NAN, 1.0]).is_err());
        assert!(identify(&[], &dummy_observation(&mut ChaCha8Rng::seed_from_u64(0), 0.0), FusionWeight::default()).is_err());
    }

    #[test]
    fn partition_properties() {
        let folds = partition(22_500, 5, 7).unwrap();
        for f in 0..5 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 4500);
        }
        assert_eq!(partition(22_500, 5, 7).unwrap(), folds);
        assert_ne!(partition(22_500, 5, 8).unwrap(), folds);
        assert!(partition(3, 5, 0).is_err());
    }

    #[test]
    fn table_averages() {
        let mut t = PerformanceTable::default();
        for i in 0..10 {
            t.record(Emotion::Angry, Gender::Male, i < 6);
            t.record(Emotion::Angry, Gender::Female, i < 8);
            t.record(Emotion::Sad, Gender::Male, true);
        }
        assert_eq!(t.percentage(Emotion::Angry, Gender::Male), Some(60.0));
        assert_eq!(t.emotion_average(Emotion::Angry), Some(70.0));
        assert_eq!(t.emotion_average(Emotion::Sad), Some(100.0));
        assert_eq!(t.grand_average(), Some(85.0));
        assert_eq!(t.total(), 30);
        let mut merged = PerformanceTable::default();
        merged.merge(&t);
        merged.merge(&t);
        assert_eq!(merged.percentage(Emotion::Angry, Gender::Female), Some(80.0));
    }

    pub(crate) fn dummy_observation(rng: &mut ChaCha8Rng, offset: f64) -> DualObservation {
        let frames: Vec<Vec<f64>> = (0..30)
            .map(|t| (0..3).map(|d| offset + (t % 3) as f64 + d as f64 + rng.random_range(-0.3..0.3)).collect())
            .collect();
        let blocks = (0..4)
            .map(|_| ProsodicVector {
                mean_f0: 100.0 + 20.0 * offset + rng.random_range(-3.0..3.0),
                f0_range: 15.0 + rng.random_range(-2.0..2.0),
                mean_log_energy: -20.0 + rng.random_range(-1.0..1.0),
                voiced_fraction: rng.random_range(0.3..0.9),
            })
            .collect();
        DualObservation::new(
            LfpcSequence {
                frames,
                provenance: "test".into(),
            },
            SuprasegmentalSequence { blocks, block_size: 9 },
        )
        .unwrap()
    }

    fn small_world(speakers: usize) -> (CorpusManifest, InMemoryFeatures) {
        let emotions = [Emotion::Neutral, Emotion::Angry];
        let manifest = CorpusManifest::new(full_records(speakers, &emotions, true), 16_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let speakers = manifest.speakers();
        let mut source = InMemoryFeatures::default();
        for r in &manifest.records {
            let ordinal = speakers.iter().position(|s| s == &r.speaker_id).unwrap();
            source
                .observations
                .insert(r.key(), dummy_observation(&mut rng, 4.0 * ordinal as f64));
        }
        (manifest, source)
    }

    fn small_topology() -> Topology {
        Topology {
            acoustic_states: 3,
            acoustic_mixtures: 1,
            suprasegmental_states: 3,
            suprasegmental_mixtures: 1,
        }
    }

    fn quick_cfg() -> TrainingConfig {
        TrainingConfig {
            max_iterations: 3,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn session_on_separable_speakers() {
        let (manifest, source) = small_world(3);
        let plan = TrainingPlan::Biased(Emotion::Angry);
        let models = train_population(&manifest, plan, &source, &small_topology(), &quick_cfg()).unwrap();
        assert!(models.iter().all(|m| (m.prior_acoustic - 1.0 / 3.0).abs() < 1e-15));
        let outcome = run_session(&manifest, plan, &models, FusionWeight::default(), &source, Execution::default()).unwrap();
        assert_eq!(outcome.log.len(), 3 * 2 * 5 * 6);
        assert_eq!(outcome.table.total(), 180);
        assert_eq!(outcome.table.grand_average(), Some(100.0));
        let top = outcome.log[0].top(3);
        assert_eq!(top.len(), 3);
        assert!(top[0].1 >= top[1].1 && top[1].1 >= top[2].1);

        let seq = run_session(&manifest, plan, &models, FusionWeight::default(), &source, Execution::Sequential).unwrap();
        assert_eq!(seq, outcome);
    }

    #[test]
    fn training_is_deterministic() {
        let (manifest, source) = small_world(2);
        let a = train_population(&manifest, TrainingPlan::Unbiased, &source, &small_topology(), &quick_cfg()).unwrap();
        let b = train_population(
            &manifest,
            TrainingPlan::Unbiased,
            &source,
            &small_topology(),
            &TrainingConfig {
                execution: Execution::Sequential,
                ..quick_cfg()
            },
        )
        .unwrap();
        assert_eq!(
            a.iter().map(SpeakerModel::to_text).collect::<Vec<_>>(),
            b.iter().map(SpeakerModel::to_text).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cross_validation_folds() {
        let (manifest, source) = small_world(2);
        let cv = cross_validate(
            &manifest,
            TrainingPlan::Unbiased,
            5,
            3,
            &source,
            &small_topology(),
            &quick_cfg(),
            FusionWeight::default(),
        )
        .unwrap();
        assert_eq!(cv.folds.len(), 5);
        assert_eq!(cv.folds.iter().map(|f| f.test_size).sum::<usize>(), 2 * 2 * 5 * 15);
        assert_eq!(cv.sd(), 0.0);
        assert_eq!(cv.mean(), 100.0);
    }

    #[test]
    fn missing_model_is_reported() {
        let (manifest, source) = small_world(2);
        let mut models = train_population(&manifest, TrainingPlan::Unbiased, &source, &small_topology(), &quick_cfg()).unwrap();
        models.pop();
        assert!(run_session(&manifest, TrainingPlan::Unbiased, &models, FusionWeight::default(), &source, Execution::default()).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_a_partition(n in 5usize..400, k in 2usize..6, seed in any::<u64>()) {
            let folds = partition(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), n);
            let sizes: Vec<usize> = (0..k).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn decision_invariant_under_shift(scores in proptest::collection::vec(-1e4f64..1e4, 2..12), shift in -1e3f64..1e3) {
            let names: Vec<String> = (0..scores.len()).map(|i| format!("s{i:02}")).collect();
            let ids: Vec<&str> = names.iter().map(String::as_str).collect();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let a = decide(&ids, &scores).unwrap();
            let b = decide(&ids, &shifted).unwrap();
            prop_assert!(a == b || (scores[a] - scores[b]).abs() < 1e-9);
        }
    }
}
