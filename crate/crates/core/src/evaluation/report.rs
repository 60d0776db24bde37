use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quality::QualityAdapter;
use super::{speaker_similarity, SpeakerEmbedder};
use crate::error::{Error, IoContext, Result};
use crate::signal::{estimate_snr, SnrEstimate, Waveform};

/// Placeholder for the listening-test column, which is never computed.
pub const MOS_UNAVAILABLE: &str = "unavailable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Reference-free SNR estimate of the audio, dB.
    SnrDb,
    /// Cosine similarity to the reference recording.
    SpeakerSimilarity,
    /// External quality meter score against the reference.
    MosLqo,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::SnrDb => "snr_db",
            Metric::SpeakerSimilarity => "speaker_similarity",
            Metric::MosLqo => "mos_lqo",
        }
    }
}

/// One utterance under one condition.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub audio: Option<Waveform>,
    pub reference: Option<Waveform>,
}

/// A labeled system (feature type and layer) and its outputs.
#[derive(Debug, Clone)]
pub struct Condition {
    pub label: String,
    pub items: Vec<EvalItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub metric: Metric,
    pub mean: f64,
    pub count: usize,
    /// `(utterance id, value)` in input order.
    pub values: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

fn mean(values: &[(String, f64)]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64
}

/// Scores every condition on every metric. Rows are ordered by condition
/// (input order) then metric (input order).
pub fn evaluate_corpus(
    conditions: &[Condition],
    metrics: &[Metric],
    embedder: &dyn SpeakerEmbedder,
    quality: Option<&QualityAdapter>,
) -> Result<EvalReport> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics selected".into()));
    }
    let mut rows = Vec::new();
    for c in conditions {
        for &metric in metrics {
            let mut values = Vec::with_capacity(c.items.len());
            for item in &c.items {
                let audio = item
                    .audio
                    .as_ref()
                    .ok_or_else(|| Error::Data(format!("{}: no audio for utterance {}", c.label, item.id)))?;
                let reference = || {
                    item.reference
                        .as_ref()
                        .ok_or_else(|| Error::Data(format!("{}: {} needs a reference for {}", c.label, metric.name(), item.id)))
                };
                let value = match metric {
                    Metric::SnrDb => match estimate_snr(audio)? {
                        SnrEstimate::Db(v) => Some(v),
                        SnrEstimate::Unmeasurable => {
                            log::warn!("{}: SNR of {} is unmeasurable, skipped", c.label, item.id);
                            None
                        }
                    },
                    Metric::SpeakerSimilarity => Some(speaker_similarity(audio, reference()?, embedder)?),
                    Metric::MosLqo => {
                        let q = quality.ok_or_else(|| Error::Config("mos_lqo needs a quality tool".into()))?;
                        Some(q.score(reference()?, audio)?)
                    }
                };
                if let Some(v) = value {
                    values.push((item.id.clone(), v));
                }
            }
            rows.push(ReportRow {
                condition: c.label.clone(),
                metric,
                mean: mean(&values),
                count: values.len(),
                values,
            });
        }
    }
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn row(&self, condition: &str, metric: Metric) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.condition == condition && r.metric == metric)
    }

    /// Long format: `condition,metric,utterance_id,value`, followed by a
    /// summary block with `mean` and `count` rows per condition and metric.
    pub fn long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "metric", "utterance_id", "value"])?;
        for r in &self.rows {
            for (id, v) in &r.values {
                w.write_record([r.condition.as_str(), r.metric.name(), id.as_str(), &format!("{v:.6}")])?;
            }
        }
        w.write_record(["", "", "", ""])?;
        w.write_record(["condition", "metric", "summary", "value"])?;
        for r in &self.rows {
            w.write_record([r.condition.as_str(), r.metric.name(), "mean", &format!("{:.6}", r.mean)])?;
            w.write_record([r.condition.as_str(), r.metric.name(), "count", &r.count.to_string()])?;
        }
        into_string(w)
    }

    /// One row per condition, one column per metric (means), plus the
    /// listening-test column marked unavailable.
    pub fn table_csv(&self) -> Result<String> {
        let mut metrics: Vec<Metric> = Vec::new();
        let mut conditions: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric) {
                metrics.push(r.metric);
            }
            if !conditions.contains(&r.condition.as_str()) {
                conditions.push(&r.condition);
            }
        }
        let cells: BTreeMap<(&str, Metric), f64> =
            self.rows.iter().map(|r| ((r.condition.as_str(), r.metric), r.mean)).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["condition"];
        header.extend(metrics.iter().map(|m| m.name()));
        header.push("mos");
        w.write_record(&header)?;
        for c in conditions {
            let mut rec = vec![c.to_string()];
            rec.extend(metrics.iter().map(|&m| match cells.get(&(c, m)) {
                Some(v) => format!("{v:.4}"),
                None => String::new(),
            }));
            rec.push(MOS_UNAVAILABLE.into());
            w.write_record(&rec)?;
        }
        into_string(w)
    }

    /// Writes `<stem>_long.csv` and `<stem>_table.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir).with_path("create report directory", dir)?;
        let long = dir.join(format!("{stem}_long.csv"));
        let table = dir.join(format!("{stem}_table.csv"));
        std::fs::write(&long, self.long_csv()?).with_path("write report", &long)?;
        std::fs::write(&table, self.table_csv()?).with_path("write report", &table)?;
        Ok((long, table))
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("flush report", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::MelSpeakerEmbedder;
    use crate::pipeline::{toy_noise, toy_utterance, NoiseKind};
    use crate::signal::mix_at_snr;
    use proptest::prelude::*;

    fn noisy(i: u64) -> Waveform {
        let u = toy_utterance("u", i as usize % 3, i).unwrap();
        let n = toy_noise(NoiseKind::Pink, u.audio.len(), i + 50).unwrap();
        mix_at_snr(&u.audio, &n, 5.0, i).unwrap().mixed
    }

    fn items(n: u64) -> Vec<EvalItem> {
        (0..n)
            .map(|i| {
                let a = noisy(i);
                EvalItem {
                    id: format!("u{i}"),
                    reference: Some(a.clone()),
                    audio: Some(a),
                }
            })
            .collect()
    }

    fn cond(label: &str, items: Vec<EvalItem>) -> Condition {
        Condition {
            label: label.into(),
            items,
        }
    }

    #[test]
    fn single_utterance_mean_is_its_value() {
        let it = items(1);
        let want = estimate_snr(it[0].audio.as_ref().unwrap()).unwrap().db().unwrap();
        let r = evaluate_corpus(&[cond("a", it)], &[Metric::SnrDb], &MelSpeakerEmbedder::default(), None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].mean, want);
    }

    #[test]
    fn conditions_are_independent() {
        let it = items(3);
        let r = evaluate_corpus(
            &[cond("a", it.clone()), cond("b", it)],
            &[Metric::SnrDb, Metric::SpeakerSimilarity],
            &MelSpeakerEmbedder::default(),
            None,
        )
        .unwrap();
        for m in [Metric::SnrDb, Metric::SpeakerSimilarity] {
            assert_eq!(r.row("a", m).unwrap().values, r.row("b", m).unwrap().values);
        }
        for (_, v) in &r.row("a", Metric::SpeakerSimilarity).unwrap().values {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_is_hand_sum_over_ten() {
        let r = evaluate_corpus(&[cond("a", items(10))], &[Metric::SnrDb], &MelSpeakerEmbedder::default(), None).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.count, 10);
        let mut s = 0.0;
        for (_, v) in &row.values {
            s += v;
        }
        assert_eq!(row.mean, s / 10.0);
    }

    #[test]
    fn missing_audio_is_an_error() {
        let mut it = items(2);
        it[1].audio = None;
        assert!(evaluate_corpus(&[cond("a", it)], &[Metric::SnrDb], &MelSpeakerEmbedder::default(), None).is_err());
    }

    #[test]
    fn csvs_are_stable_and_shaped() {
        let conds = [cond("mel", items(2)), cond("layer5", items(2))];
        let run = || evaluate_corpus(&conds, &[Metric::SnrDb], &MelSpeakerEmbedder::default(), None).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.long_csv().unwrap(), b.long_csv().unwrap());
        let table = a.table_csv().unwrap();
        assert_eq!(table, b.table_csv().unwrap());
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "condition,snr_db,mos");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("mel,") && lines[1].ends_with(",unavailable"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn means_ignore_utterance_order(vals in prop::collection::vec(-50.0f64..50.0, 1..20), rot in 0usize..20) {
            let a: Vec<(String, f64)> = vals.iter().enumerate().map(|(i, &v)| (i.to_string(), v)).collect();
            let mut b = a.clone();
            b.rotate_left(rot % a.len());
            prop_assert!((mean(&a) - mean(&b)).abs() < 1e-9);
        }
    }
}
