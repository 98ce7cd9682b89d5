//! Plain-text delimited reports.

use std::fmt::Write as _;

use crate::corpus::{Emotion, Gender};
use crate::protocol::{CrossValidation, IdentificationResult, PerformanceTable, SessionOutcome};
use crate::stats::{self, ConfusionMatrix, TwoSampleSummary};
use crate::{Error, Result};

pub const PERFORMANCE_HEADER: &str = "Emotion,Males(%),Females(%),Average(%)";
pub const RAW_LOG_HEADER: &str = "key,true,predicted,top1,score1,top2,score2,top3,score3";
pub const STATS_HEADER: &str = "comparison,mean1,sd1,mean2,sd2,n,t,significant,kappa,kappa_band,note";
pub const XVAL_HEADER: &str = "fold,test_size,grand_average(%)";

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"))
}

/// Emotion rows in report order, then a grand-average row.
pub fn performance_csv(table: &PerformanceTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PERFORMANCE_HEADER}");
    for e in table.emotions() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.title(),
            pct(table.percentage(e, Gender::Male)),
            pct(table.percentage(e, Gender::Female)),
            pct(table.emotion_average(e))
        );
    }
    let _ = writeln!(out, "Grand average,,,{}", pct(table.grand_average()));
    out
}

/// One line per identification with the three best-scoring speakers.
pub fn raw_log(log: &[IdentificationResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{RAW_LOG_HEADER}");
    for r in log {
        let _ = write!(out, "{},{},{}", r.key, r.true_speaker, r.identified_speaker);
        let top = r.top(3);
        for i in 0..3 {
            match top.get(i) {
                Some((s, v)) => {
                    let _ = write!(out, ",{s},{v:.6}");
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Cohen's kappa between true and identified speakers of a session.
pub fn session_kappa(outcome: &SessionOutcome) -> Result<f64> {
    let mut labels: Vec<&str> = outcome
        .log
        .iter()
        .flat_map(|r| [r.true_speaker.as_str(), r.identified_speaker.as_str()])
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let index = |s: &str| labels.binary_search(&s).unwrap_or(0);
    let cm = ConfusionMatrix::from_pairs(
        outcome
            .log
            .iter()
            .map(|r| (index(&r.true_speaker), index(&r.identified_speaker))),
        labels.len(),
    )?;
    stats::cohen_kappa(&cm)
}

/// A two-run comparison in the shape of a t-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub comparison: String,
    pub summary: TwoSampleSummary,
    pub t: Option<f64>,
    pub kappa: Option<f64>,
}

impl ComparisonRow {
    /// Means and SDs over the per-emotion averages of both tables; `n` is the
    /// common sample size entering the pooled SD.
    pub fn from_tables(comparison: &str, first: &PerformanceTable, second: &PerformanceTable, n: usize) -> Result<Self> {
        let a = first.emotion_averages();
        let b = second.emotion_averages();
        if a.is_empty() || b.is_empty() {
            return Err(Error::InsufficientData("comparison needs nonempty tables".into()));
        }
        let sd = |v: &[f64]| stats::sample_sd(v).unwrap_or(0.0);
        let summary = TwoSampleSummary {
            mean1: stats::mean(&a)?,
            sd1: sd(&a),
            mean2: stats::mean(&b)?,
            sd2: sd(&b),
            n,
        };
        let t = match stats::t_statistic(&summary) {
            Ok(t) => Some(t),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(ComparisonRow {
            comparison: comparison.to_string(),
            summary,
            t,
            kappa: None,
        })
    }
}

pub fn stats_report(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{STATS_HEADER}");
    for r in rows {
        let s = &r.summary;
        let t = r.t.map_or_else(|| "NA".to_string(), |t| format!("{t:.3}"));
        let sig = r.t.is_some_and(stats::significant_at_005);
        let (kappa, band, note) = match r.kappa {
            Some(k) => (
                format!("{k:.3}"),
                stats::kappa_band(k).label().to_string(),
                stats::kappa_band_note(k).unwrap_or("").to_string(),
            ),
            None => ("NA".into(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{},{},{},{},{},{}",
            r.comparison, s.mean1, s.sd1, s.mean2, s.sd2, s.n, t, sig, kappa, band, note
        );
    }
    out
}

/// Fold rows then a standard-deviation row.
pub fn xval_report(cv: &CrossValidation) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# plan {}: {} random subsets of the plan's utterances; models retrained on the remaining subsets for each",
        cv.plan,
        cv.folds.len()
    );
    let _ = writeln!(out, "{XVAL_HEADER}");
    for (f, avg) in cv.folds.iter().zip(cv.fold_averages()) {
        let _ = writeln!(out, "{},{},{avg:.2}", f.fold + 1, f.test_size);
    }
    let _ = writeln!(out, "sd,,{:.2}", cv.sd());
    out
}

/// Parses a performance CSV back into per-emotion averages.
pub fn parse_performance_averages(text: &str) -> Result<Vec<(Emotion, f64)>> {
    let bad = |m: String| Error::Format {
        path: "<performance report>".into(),
        message: m,
    };
    let mut lines = text.lines();
    if lines.next() != Some(PERFORMANCE_HEADER) {
        return Err(bad("missing header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns: {line}")));
        }
        if cols[0] == "Grand average" {
            continue;
        }
        let e: Emotion = cols[0].to_ascii_lowercase().parse()?;
        let avg: f64 = cols[3].parse().map_err(|_| bad(format!("bad average in {line}")))?;
        out.push((e, avg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::FoldResult;
    use crate::sphmm::FusionWeight;
    use crate::protocol::TrainingPlan;

    fn table(cells: &[(Emotion, f64, f64)]) -> PerformanceTable {
        let mut t = PerformanceTable::default();
        for &(e, m, f) in cells {
            for i in 0..100 {
                t.record(e, Gender::Male, (i as f64) < m);
                t.record(e, Gender::Female, (i as f64) < f);
            }
        }
        t
    }

    fn table_one() -> PerformanceTable {
        table(&[
            (Emotion::Neutral, 86.0, 87.0),
            (Emotion::Angry, 64.0, 65.0),
            (Emotion::Sad, 68.0, 70.0),
            (Emotion::Happy, 72.0, 74.0),
            (Emotion::Disgust, 73.0, 72.0),
            (Emotion::Fear, 72.0, 74.0),
        ])
    }

    #[test]
    fn performance_layout() {
        let csv = performance_csv(&table_one());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Emotion,Males(%),Females(%),Average(%)");
        assert_eq!(lines[1], "Neutral,86.00,87.00,86.50");
        assert_eq!(lines[7], "Grand average,,,73.08");
        let parsed = parse_performance_averages(&csv).unwrap();
        assert_eq!(parsed.len(), 6);
        assert_eq!(parsed[1], (Emotion::Angry, 64.5));
    }

    #[test]
    fn comparison_row() {
        let hmm = table(&[
            (Emotion::Neutral, 81.0, 82.0),
            (Emotion::Angry, 57.0, 58.0),
            (Emotion::Sad, 61.0, 61.0),
            (Emotion::Happy, 65.0, 66.0),
            (Emotion::Disgust, 67.0, 68.0),
            (Emotion::Fear, 65.0, 65.0),
        ]);
        let row = ComparisonRow::from_tables("unbiased", &table_one(), &hmm, 180).unwrap();
        assert!((row.t.unwrap() - 8.191).abs() < 0.02);
        let text = stats_report(&[row]);
        assert!(text.starts_with(STATS_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("unbiased,73.08,7.36,66.33,8.25,180,"));
        let same = ComparisonRow::from_tables("same", &table_one(), &table_one(), 180).unwrap();
        assert!((same.t.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn raw_log_and_kappa() {
        let log = vec![
            IdentificationResult {
                key: "k1".into(),
                true_speaker: "a".into(),
                identified_speaker: "a".into(),
                scores: vec![("a".into(), -1.0), ("b".into(), -2.0)],
            },
            IdentificationResult {
                key: "k2".into(),
                true_speaker: "b".into(),
                identified_speaker: "b".into(),
                scores: vec![("a".into(), -3.0), ("b".into(), -2.5)],
            },
        ];
        let text = raw_log(&log);
        assert_eq!(text.lines().nth(1).unwrap(), "k1,a,a,a,-1.000000,b,-2.000000,,");
        let outcome = SessionOutcome {
            plan: TrainingPlan::Unbiased,
            alpha: FusionWeight::default(),
            table: PerformanceTable::default(),
            log,
        };
        assert_eq!(session_kappa(&outcome).unwrap(), 1.0);
    }

    #[test]
    fn xval_shape() {
        let t = table(&[(Emotion::Neutral, 80.0, 80.0)]);
        let cv = CrossValidation {
            plan: TrainingPlan::Unbiased,
            folds: (0..5)
                .map(|fold| FoldResult {
                    fold,
                    test_size: 10,
                    table: t.clone(),
                })
                .collect(),
        };
        let text = xval_report(&cv);
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[5], "sd,,0.00");
    }
}
