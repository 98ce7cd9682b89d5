use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{CorpusManifest, Session, UtteranceRecord, PROTOCOL_SAMPLE_RATE, REPETITIONS, SENTENCES};
use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "speaker_id,gender,emotion,sentence_id,bias_tag,session,repetition,source";

/// Reads a manifest. Leading `# key=value` lines carry metadata; the
/// `sample_rate` key sets the corpus rate (16 kHz when absent).
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let row_err = |row: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut metadata = BTreeMap::new();
    let mut body_start = 0;
    let mut comment_lines = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.trim_end().strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        }
        body_start += line.len();
        comment_lines += 1;
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(&text.as_bytes()[body_start..]);
    let header_row = comment_lines + 1;
    let headers = reader
        .headers()
        .map_err(|e| row_err(header_row, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != MANIFEST_HEADER {
        return Err(row_err(
            header_row,
            format!("expected header `{MANIFEST_HEADER}`, found `{headers}`"),
        ));
    }

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            row_err(comment_lines + line, e.to_string())
        })?;
        let line = comment_lines + row.position().map_or(0, |p| p.line() as usize);
        if row.len() != 8 {
            return Err(row_err(line, format!("expected 8 fields, found {}", row.len())));
        }
        let field = |i: usize| &row[i];
        let bad = |what: &str, tok: &str| row_err(line, format!("{what} {tok:?}"));

        let speaker_id = field(0).to_string();
        if speaker_id.is_empty() {
            return Err(row_err(line, "empty speaker_id".into()));
        }
        let gender = field(1).parse().map_err(|_| bad("unknown gender", field(1)))?;
        let emotion = field(2).parse().map_err(|_| bad("unknown emotion", field(2)))?;
        let sentence_id: u8 = field(3).parse().map_err(|_| bad("invalid sentence_id", field(3)))?;
        if !(1..=SENTENCES).contains(&sentence_id) {
            return Err(bad("sentence_id out of 1..5:", field(3)));
        }
        let bias_tag = field(4).parse().map_err(|_| bad("unknown bias_tag", field(4)))?;
        let session: Session = field(5).parse().map_err(|_| bad("unknown session", field(5)))?;
        let repetition: u8 = field(6).parse().map_err(|_| bad("invalid repetition", field(6)))?;
        if !(1..=REPETITIONS).contains(&repetition) {
            return Err(bad("repetition out of 1..15:", field(6)));
        }
        if Session::for_repetition(repetition) != session {
            return Err(row_err(
                line,
                format!("repetition {repetition} belongs to the {} session", Session::for_repetition(repetition).as_str()),
            ));
        }
        let record = UtteranceRecord {
            speaker_id,
            gender,
            emotion,
            sentence_id,
            bias_tag,
            session,
            repetition,
            source: field(7).into(),
        };
        if let Some(prev) = seen.insert(record.key(), line) {
            return Err(row_err(line, format!("duplicate utterance {} (first on row {prev})", record.key())));
        }
        records.push(record);
    }

    let sample_rate = match metadata.get("sample_rate") {
        Some(v) => v
            .parse()
            .map_err(|_| row_err(1, format!("invalid sample_rate {v:?}")))?,
        None => PROTOCOL_SAMPLE_RATE,
    };
    Ok(CorpusManifest {
        records,
        sample_rate,
        metadata,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# sample_rate={}\n", manifest.sample_rate));
    for (k, v) in &manifest.metadata {
        if k != "sample_rate" {
            out.push_str(&format!("# {k}={v}\n"));
        }
    }
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    writer.write_record(MANIFEST_HEADER.split(',')).map_err(io)?;
    for r in &manifest.records {
        writer
            .write_record([
                r.speaker_id.as_str(),
                r.gender.as_str(),
                r.emotion.as_str(),
                &r.sentence_id.to_string(),
                &r.bias_tag.to_string(),
                r.session.as_str(),
                &r.repetition.to_string(),
                &r.source.to_string_lossy(),
            ])
            .map_err(io)?;
    }
    let body = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    out.push_str(&String::from_utf8_lossy(&body));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testutil::full_records;
    use crate::corpus::{BiasTag, Emotion, Gender};

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("m.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &format!("{MANIFEST_HEADER}\nspk01,male,angry,3,unbiased,train,2,a.wav\n"),
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.records.len(), 1);
        let r = &m.records[0];
        assert_eq!((r.gender, r.emotion, r.sentence_id, r.repetition), (Gender::Male, Emotion::Angry, 3, 2));
        assert_eq!(m.sample_rate, 16_000);
        assert_eq!(m.resolve(&r.source), dir.path().join("a.wav"));
    }

    #[test]
    fn unknown_emotion_names_row_and_token() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &format!(
                "{MANIFEST_HEADER}\nspk01,male,angry,3,unbiased,train,2,a.wav\nspk01,male,bored,3,unbiased,train,3,b.wav\n"
            ),
        );
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(err.contains("bored"), "{err}");
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        for row in [
            "spk01,male,angry,3,unbiased,test,16,a.wav",
            "spk01,male,angry,3,unbiased,test,0,a.wav",
            "spk01,male,angry,3,unbiased,train,12,a.wav",
            "spk01,male,angry,6,unbiased,train,1,a.wav",
            "spk01,other,angry,3,unbiased,train,1,a.wav",
        ] {
            let p = write(dir.path(), &format!("{MANIFEST_HEADER}\n{row}\n"));
            let err = load_manifest(&p).unwrap_err();
            assert!(matches!(err, Error::Manifest { row: 2, .. }), "{row}: {err}");
        }
        let p = write(
            dir.path(),
            &format!("{MANIFEST_HEADER}\nspk01,male,angry,3,unbiased,train,2,a.wav\nspk01,male,angry,3,unbiased,train,2,b.wav\n"),
        );
        assert!(load_manifest(&p).unwrap_err().to_string().contains("duplicate"));
        assert!(load_manifest(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn biased_neutral_reads_as_unbiased() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), &format!("{MANIFEST_HEADER}\nspk01,female,neutral,1,biased:neutral,train,1,a.lfpc\n"));
        assert_eq!(load_manifest(&p).unwrap().records[0].bias_tag, BiasTag::Unbiased);
    }

    #[test]
    fn round_trip_paper_scale() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CorpusManifest::new(full_records(50, &Emotion::ALL, false), 16_000);
        m.metadata.insert("origin".into(), "test".into());
        let p = dir.path().join("full.csv");
        write_manifest(&m, &p).unwrap();
        let back = load_manifest(&p).unwrap();
        assert_eq!(back.records.len(), 22_500);
        assert_eq!(back.records, m.records);
        assert_eq!(back.metadata.get("origin").map(String::as_str), Some("test"));
    }
}
