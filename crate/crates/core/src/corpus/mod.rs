//! Corpus data model: labeled utterances, manifests, audio and feature files,
//! and the protocol count checks that gate every experiment.

mod featfile;
mod manifest;
pub mod synth;
mod wav;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

pub use featfile::{read_feature_file, write_feature_file, FeatureMatrix};
pub use manifest::{load_manifest, write_manifest, MANIFEST_HEADER};
pub use synth::{generate_synthetic_corpus, synthesize, SynthConfig, SynthMode, SyntheticCorpus};
pub use wav::{read_audio, write_audio, AudioSignal};

/// Sample rate of every paper-protocol corpus.
pub const PROTOCOL_SAMPLE_RATE: u32 = 16_000;
/// Repetitions recorded per sentence; 1..=9 are training, 10..=15 test.
pub const REPETITIONS: u8 = 15;
pub const TRAIN_REPETITIONS: u8 = 9;
pub const SENTENCES: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Neutral,
    Angry,
    Sad,
    Happy,
    Disgust,
    Fear,
}

impl Emotion {
    /// Reporting order.
    pub const ALL: [Emotion; 6] = [
        Emotion::Neutral,
        Emotion::Angry,
        Emotion::Sad,
        Emotion::Happy,
        Emotion::Disgust,
        Emotion::Fear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Angry => "angry",
            Emotion::Sad => "sad",
            Emotion::Happy => "happy",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Capitalized name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Emotion::Neutral => "Neutral",
            Emotion::Angry => "Angry",
            Emotion::Sad => "Sad",
            Emotion::Happy => "Happy",
            Emotion::Disgust => "Disgust",
            Emotion::Fear => "Fear",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown emotion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            _ => Err(Error::InvalidArgument(format!("unknown gender {s:?}"))),
        }
    }
}

/// Whether a sentence's content correlates with the emotion it is spoken in.
///
/// Sentences biased towards neutral are the unbiased sentences, so
/// `BiasTag::biased(Emotion::Neutral)` is `BiasTag::Unbiased`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BiasTag {
    Unbiased,
    Biased(Emotion),
}

impl BiasTag {
    pub fn biased(e: Emotion) -> Self {
        if e == Emotion::Neutral {
            BiasTag::Unbiased
        } else {
            BiasTag::Biased(e)
        }
    }

    /// Filesystem-safe token (`unbiased`, `biased-angry`).
    pub fn slug(self) -> String {
        match self {
            BiasTag::Unbiased => "unbiased".to_string(),
            BiasTag::Biased(e) => format!("biased-{e}"),
        }
    }
}

impl fmt::Display for BiasTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiasTag::Unbiased => f.write_str("unbiased"),
            BiasTag::Biased(e) => write!(f, "biased:{e}"),
        }
    }
}

impl FromStr for BiasTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unbiased") {
            return Ok(BiasTag::Unbiased);
        }
        match s.split_once([':', '-']) {
            Some((head, e)) if head.eq_ignore_ascii_case("biased") => {
                Ok(BiasTag::biased(e.parse()?))
            }
            _ => Err(Error::InvalidArgument(format!("unknown bias tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Session {
    Train,
    Test,
}

impl Session {
    pub fn for_repetition(rep: u8) -> Session {
        if rep <= TRAIN_REPETITIONS {
            Session::Train
        } else {
            Session::Test
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Session::Train => "train",
            Session::Test => "test",
        }
    }
}

impl FromStr for Session {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Session::Train),
            "test" => Ok(Session::Test),
            _ => Err(Error::InvalidArgument(format!("unknown session {s:?}"))),
        }
    }
}

/// Which talking environment a speaker model is trained and evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrainingPlan {
    Unbiased,
    Biased(Emotion),
}

impl TrainingPlan {
    pub fn biased(e: Emotion) -> Self {
        if e == Emotion::Neutral {
            TrainingPlan::Unbiased
        } else {
            TrainingPlan::Biased(e)
        }
    }

    /// The sentence set used for utterances spoken in `emotion` under this plan.
    pub fn tag_for(self, emotion: Emotion) -> BiasTag {
        match self {
            TrainingPlan::Biased(e) if e == emotion => BiasTag::Biased(e),
            _ => BiasTag::Unbiased,
        }
    }

    pub fn includes(self, record: &UtteranceRecord) -> bool {
        record.bias_tag == self.tag_for(record.emotion)
    }

    pub fn slug(self) -> String {
        match self {
            TrainingPlan::Unbiased => "unbiased".to_string(),
            TrainingPlan::Biased(e) => format!("biased-{e}"),
        }
    }
}

impl fmt::Display for TrainingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainingPlan::Unbiased => f.write_str("unbiased"),
            TrainingPlan::Biased(e) => write!(f, "biased:{e}"),
        }
    }
}

impl FromStr for TrainingPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<BiasTag>()? {
            BiasTag::Unbiased => TrainingPlan::Unbiased,
            BiasTag::Biased(e) => TrainingPlan::Biased(e),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: Emotion,
    pub sentence_id: u8,
    pub bias_tag: BiasTag,
    pub session: Session,
    pub repetition: u8,
    /// Audio (`.wav`) or acoustic feature file path, relative paths resolved
    /// against the manifest directory.
    pub source: PathBuf,
}

/// Identity of one recording; unique within a manifest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtteranceKey {
    pub speaker_id: String,
    pub emotion: Emotion,
    pub sentence_id: u8,
    pub bias_tag: BiasTag,
    pub repetition: u8,
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{}_{}_s{}_r{:02}",
            self.speaker_id,
            self.emotion,
            self.bias_tag.slug(),
            self.sentence_id,
            self.repetition
        )
    }
}

impl UtteranceRecord {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey {
            speaker_id: self.speaker_id.clone(),
            emotion: self.emotion,
            sentence_id: self.sentence_id,
            bias_tag: self.bias_tag,
            repetition: self.repetition,
        }
    }

    pub fn is_audio(&self) -> bool {
        self.source
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub sample_rate: u32,
    pub metadata: BTreeMap<String, String>,
    /// Directory relative sources resolve against.
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn new(records: Vec<UtteranceRecord>, sample_rate: u32) -> Self {
        CorpusManifest {
            records,
            sample_rate,
            metadata: BTreeMap::new(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, source: &Path) -> PathBuf {
        if source.is_absolute() {
            source.to_path_buf()
        } else {
            self.base_dir.join(source)
        }
    }

    /// Registered speakers, sorted; a speaker's ordinal is its index here.
    pub fn speakers(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn gender_of(&self, speaker: &str) -> Option<Gender> {
        self.records
            .iter()
            .find(|r| r.speaker_id == speaker)
            .map(|r| r.gender)
    }

    /// Emotions present, in reporting order.
    pub fn emotions(&self) -> Vec<Emotion> {
        Emotion::ALL
            .into_iter()
            .filter(|e| self.records.iter().any(|r| r.emotion == *e))
            .collect()
    }

    pub fn check_unique_keys(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(prev) = seen.insert(r.key(), i) {
                return Err(Error::Protocol(format!(
                    "duplicate utterance {} (records {} and {})",
                    r.key(),
                    prev + 1,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-cell repetition counts expected by the recording protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolCounts {
    pub emotions: Vec<Emotion>,
    pub sentences: u8,
    pub train_repetitions: u8,
    pub test_repetitions: u8,
}

impl ProtocolCounts {
    /// Six emotions, five sentences, nine training and six test repetitions.
    pub fn paper() -> Self {
        Self::for_emotions(Emotion::ALL.to_vec())
    }

    pub fn for_emotions(emotions: Vec<Emotion>) -> Self {
        ProtocolCounts {
            emotions,
            sentences: SENTENCES,
            train_repetitions: TRAIN_REPETITIONS,
            test_repetitions: REPETITIONS - TRAIN_REPETITIONS,
        }
    }

    pub fn train_per_speaker(&self) -> usize {
        self.emotions.len() * self.sentences as usize * self.train_repetitions as usize
    }

    pub fn test_per_speaker(&self) -> usize {
        self.emotions.len() * self.sentences as usize * self.test_repetitions as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerCounts {
    pub speaker_id: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deficit {
    pub speaker_id: String,
    pub emotion: Emotion,
    pub sentence_id: u8,
    pub bias_tag: BiasTag,
    pub session: Session,
    pub found: usize,
    pub expected: usize,
}

impl fmt::Display for Deficit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} sentence {} ({}) {}: {}/{}",
            self.speaker_id,
            self.emotion,
            self.sentence_id,
            self.bias_tag,
            self.session.as_str(),
            self.found,
            self.expected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolReport {
    pub plan: TrainingPlan,
    pub counts: ProtocolCounts,
    pub speakers: Vec<SpeakerCounts>,
    pub deficits: Vec<Deficit>,
}

impl ProtocolReport {
    pub fn passed(&self) -> bool {
        self.deficits.is_empty()
    }

    pub fn train_total(&self) -> usize {
        self.speakers.iter().map(|s| s.train).sum()
    }

    pub fn test_total(&self) -> usize {
        self.speakers.iter().map(|s| s.test).sum()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let shown: Vec<String> = self.deficits.iter().take(5).map(|d| d.to_string()).collect();
            Err(Error::Protocol(format!(
                "{} incomplete cells for plan {}: {}{}",
                self.deficits.len(),
                self.plan,
                shown.join("; "),
                if self.deficits.len() > 5 { "; ..." } else { "" }
            )))
        }
    }
}

/// Checks every (speaker, emotion, sentence) cell selected by `plan` has the
/// full set of training and test repetitions. Never fails; deficits are
/// listed in the report.
pub fn validate_protocol_counts(
    manifest: &CorpusManifest,
    plan: TrainingPlan,
    counts: &ProtocolCounts,
) -> ProtocolReport {
    let mut cells: BTreeMap<(&str, Emotion, u8, Session), usize> = BTreeMap::new();
    for r in &manifest.records {
        if plan.includes(r) && counts.emotions.contains(&r.emotion) {
            *cells
                .entry((r.speaker_id.as_str(), r.emotion, r.sentence_id, r.session))
                .or_default() += 1;
        }
    }

    let mut speakers = Vec::new();
    let mut deficits = Vec::new();
    for speaker in manifest.speakers() {
        let mut tally = SpeakerCounts {
            speaker_id: speaker.clone(),
            train: 0,
            test: 0,
        };
        for &emotion in &counts.emotions {
            for sentence in 1..=counts.sentences {
                for (session, expected) in [
                    (Session::Train, counts.train_repetitions as usize),
                    (Session::Test, counts.test_repetitions as usize),
                ] {
                    let found = cells
                        .get(&(speaker.as_str(), emotion, sentence, session))
                        .copied()
                        .unwrap_or(0);
                    match session {
                        Session::Train => tally.train += found,
                        Session::Test => tally.test += found,
                    }
                    if found != expected {
                        deficits.push(Deficit {
                            speaker_id: speaker.clone(),
                            emotion,
                            sentence_id: sentence,
                            bias_tag: plan.tag_for(emotion),
                            session,
                            found,
                            expected,
                        });
                    }
                }
            }
        }
        speakers.push(tally);
    }

    ProtocolReport {
        plan,
        counts: counts.clone(),
        speakers,
        deficits,
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::full_records;
    use super::*;

    #[test]
    fn neutral_bias_collapses_to_unbiased() {
        assert_eq!(BiasTag::biased(Emotion::Neutral), BiasTag::Unbiased);
        assert_eq!("biased:neutral".parse::<BiasTag>().unwrap(), BiasTag::Unbiased);
        assert_eq!(TrainingPlan::biased(Emotion::Neutral), TrainingPlan::Unbiased);
        assert_eq!("biased:angry".parse::<TrainingPlan>().unwrap(), TrainingPlan::Biased(Emotion::Angry));
    }

    #[test]
    fn emotion_order_is_fixed() {
        let names: Vec<_> = Emotion::ALL.iter().map(|e| e.as_str()).collect();
        assert_eq!(names, ["neutral", "angry", "sad", "happy", "disgust", "fear"]);
        assert!("bored".parse::<Emotion>().is_err());
    }

    #[test]
    fn repetition_split() {
        assert_eq!(Session::for_repetition(9), Session::Train);
        assert_eq!(Session::for_repetition(10), Session::Test);
    }

    #[test]
    fn complete_paper_manifest_passes() {
        let m = CorpusManifest::new(full_records(50, &Emotion::ALL, false), 16_000);
        assert_eq!(m.records.len(), 22_500);
        let report = validate_protocol_counts(&m, TrainingPlan::Unbiased, &ProtocolCounts::paper());
        assert!(report.passed());
        assert_eq!(report.test_total(), 9000);
        assert!(report.speakers.iter().all(|s| s.train == 270 && s.test == 180));
    }

    #[test]
    fn missing_test_repetition_is_reported() {
        let mut records = full_records(2, &Emotion::ALL, false);
        let idx = records
            .iter()
            .position(|r| r.speaker_id == "spk02" && r.emotion == Emotion::Sad && r.sentence_id == 4 && r.repetition == 12)
            .unwrap();
        records.remove(idx);
        let m = CorpusManifest::new(records, 16_000);
        let report = validate_protocol_counts(&m, TrainingPlan::Unbiased, &ProtocolCounts::paper());
        assert!(!report.passed());
        assert_eq!(
            report.deficits,
            vec![Deficit {
                speaker_id: "spk02".into(),
                emotion: Emotion::Sad,
                sentence_id: 4,
                bias_tag: BiasTag::Unbiased,
                session: Session::Test,
                found: 5,
                expected: 6,
            }]
        );
        assert!(report.into_result().is_err());
    }

    #[test]
    fn four_speaker_synthetic_counts() {
        let m = CorpusManifest::new(full_records(4, &Emotion::ALL, true), 16_000);
        for plan in [TrainingPlan::Unbiased, TrainingPlan::Biased(Emotion::Fear)] {
            let report = validate_protocol_counts(&m, plan, &ProtocolCounts::paper());
            assert!(report.passed(), "{plan}");
            assert_eq!(report.test_total(), 720);
        }
    }

    #[test]
    fn biased_plan_needs_biased_sentences() {
        let m = CorpusManifest::new(full_records(2, &Emotion::ALL, false), 16_000);
        let report = validate_protocol_counts(&m, TrainingPlan::Biased(Emotion::Angry), &ProtocolCounts::paper());
        assert!(!report.passed());
        assert_eq!(report.deficits.len(), 2 * 5 * 2);
    }

    #[test]
    fn duplicate_keys_detected() {
        let mut records = full_records(1, &[Emotion::Neutral], false);
        records.push(records[0].clone());
        assert!(CorpusManifest::new(records, 16_000).check_unique_keys().is_err());
    }
}
