use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BeafSide, Condition, RunRecord, SampleTask};
use crate::error::{Error, Result};
use crate::metrics::{
    beaf_metrics, chair_metrics, confusion_metrics, BeafMetrics, BeafRecord, ChairMetrics, ChairSample,
    ConfusionCounts, ConfusionMetrics, ParsedAnswer, PopeStrategy, SynonymMap,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PopeMetrics {
    pub counts: ConfusionCounts,
    pub metrics: ConfusionMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub records: u64,
    pub unparseable: u64,
    pub pope: BTreeMap<PopeStrategy, PopeMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beaf: Option<BeafMetrics>,
    /// BEAF items missing one side of the pair.
    #[serde(default)]
    pub beaf_incomplete: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chair: Option<ChairMetrics>,
}

/// Per-condition POPE, BEAF and CHAIR metrics from persisted records.
/// Deterministic in the record order.
pub fn compute_metrics(records: &[RunRecord], synonyms: &SynonymMap) -> Result<BTreeMap<Condition, ConditionMetrics>> {
    let mut by_condition: BTreeMap<Condition, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_condition.entry(r.condition).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (condition, mut recs) in by_condition {
        recs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let mut m = ConditionMetrics {
            records: recs.len() as u64,
            ..Default::default()
        };
        let mut beaf_sides: BTreeMap<&str, [Option<&RunRecord>; 2]> = BTreeMap::new();
        let mut chair = Vec::new();
        for r in &recs {
            if r.parsed_answer == Some(ParsedAnswer::Unparseable) {
                m.unparseable += 1;
            }
            match &r.task {
                SampleTask::Pope {
                    strategy, ground_truth, ..
                } => {
                    let parsed = r.parsed_answer.unwrap_or(ParsedAnswer::Unparseable);
                    m.pope
                        .entry(*strategy)
                        .or_default()
                        .counts
                        .record(*ground_truth, parsed);
                }
                SampleTask::Beaf { item_id, side, .. } => {
                    let slot = match side {
                        BeafSide::Original => 0,
                        BeafSide::Manipulated => 1,
                    };
                    beaf_sides.entry(item_id.as_str()).or_default()[slot] = Some(r);
                }
                SampleTask::Chair {
                    image_id,
                    annotated_objects,
                } => chair.push(ChairSample {
                    image_id: image_id.clone(),
                    caption: r.response_text.clone(),
                    annotated_objects: annotated_objects.clone(),
                }),
            }
        }
        for p in m.pope.values_mut() {
            p.metrics = confusion_metrics(&p.counts);
        }
        if !beaf_sides.is_empty() {
            let mut pairs = Vec::new();
            for (item, sides) in &beaf_sides {
                let [Some(o), Some(mp)] = sides else {
                    tracing::warn!(%condition, item, "BEAF item lacks one side; excluded");
                    m.beaf_incomplete += 1;
                    continue;
                };
                let (
                    SampleTask::Beaf {
                        ground_truth: go,
                        removed,
                        ..
                    },
                    SampleTask::Beaf { ground_truth: gm, .. },
                ) = (&o.task, &mp.task)
                else {
                    unreachable!("grouped by BEAF task");
                };
                pairs.push(BeafRecord {
                    original_image: o.image.clone(),
                    manipulated_image: mp.image.clone(),
                    question: o.prompt.clone(),
                    gold_original: *go,
                    gold_manipulated: *gm,
                    answer_original: o.parsed_answer.unwrap_or(ParsedAnswer::Unparseable),
                    answer_manipulated: mp.parsed_answer.unwrap_or(ParsedAnswer::Unparseable),
                    removed: *removed,
                });
            }
            m.beaf = Some(beaf_metrics(&pairs));
        }
        if !chair.is_empty() {
            m.chair = Some(chair_metrics(&chair, synonyms)?);
        }
        out.insert(condition, m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipAnalysis {
    /// Samples compared; the denominator of both rates.
    pub samples: u64,
    pub false_drops: u64,
    pub corrections: u64,
    /// Correct before, incorrect after, in percent.
    pub false_drop_rate: f64,
    /// Incorrect before, correct after, in percent.
    pub correction_rate: f64,
    /// Share of "yes" answers within the false-drop subset; undefined when it is empty.
    pub yes_ratio_before: Option<f64>,
    pub yes_ratio_after: Option<f64>,
}

/// Compares the scored records of two conditions sample by sample.
pub fn analyze_flips(records: &[RunRecord], before: Condition, after: Condition) -> Result<FlipAnalysis> {
    let pick = |c: Condition| -> BTreeMap<&str, &RunRecord> {
        records
            .iter()
            .filter(|r| r.condition == c && r.correct.is_some())
            .map(|r| (r.sample_id.as_str(), r))
            .collect()
    };
    let (a, b) = (pick(before), pick(after));
    let ka: BTreeSet<&str> = a.keys().copied().collect();
    let kb: BTreeSet<&str> = b.keys().copied().collect();
    if ka != kb {
        let only_a: Vec<&str> = ka.difference(&kb).take(10).copied().collect();
        let only_b: Vec<&str> = kb.difference(&ka).take(10).copied().collect();
        return Err(Error::validation(format!(
            "sample sets differ: only in {before}: {only_a:?}; only in {after}: {only_b:?}"
        )));
    }
    if ka.is_empty() {
        return Err(Error::validation(format!("no scored records for {before} and {after}")));
    }
    let mut f = FlipAnalysis {
        samples: ka.len() as u64,
        ..Default::default()
    };
    let (mut yes_before, mut yes_after) = (0u64, 0u64);
    for id in &ka {
        let (ra, rb) = (a[id], b[id]);
        match (ra.correct == Some(true), rb.correct == Some(true)) {
            (true, false) => {
                f.false_drops += 1;
                yes_before += u64::from(ra.parsed_answer == Some(ParsedAnswer::Yes));
                yes_after += u64::from(rb.parsed_answer == Some(ParsedAnswer::Yes));
            }
            (false, true) => f.corrections += 1,
            _ => {}
        }
    }
    let pct = |n: u64, d: u64| 100.0 * n as f64 / d as f64;
    f.false_drop_rate = pct(f.false_drops, f.samples);
    f.correction_rate = pct(f.corrections, f.samples);
    if f.false_drops > 0 {
        f.yes_ratio_before = Some(pct(yes_before, f.false_drops));
        f.yes_ratio_after = Some(pct(yes_after, f.false_drops));
    }
    Ok(f)
}
