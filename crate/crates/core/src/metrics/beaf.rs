//! Before/after evaluation over scene-manipulated image pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::answer::{Answer, ParsedAnswer};
use super::confusion::{confusion_metrics, harmonic_mean, ConfusionCounts};
use crate::error::{Error, Result};

/// One question asked of an original and a manipulated image.
/// `removed` is true iff the question concerns the object removed by the manipulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeafRecord {
    pub original_image: String,
    pub manipulated_image: String,
    pub question: String,
    pub gold_original: Answer,
    pub gold_manipulated: Answer,
    pub answer_original: ParsedAnswer,
    pub answer_manipulated: ParsedAnswer,
    pub removed: bool,
}

impl BeafRecord {
    pub fn original_correct(&self) -> bool {
        self.answer_original.matches(self.gold_original)
    }

    pub fn manipulated_correct(&self) -> bool {
        self.answer_manipulated.matches(self.gold_manipulated)
    }
}

/// A manifest entry: the evaluation input before any answers exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeafItem {
    pub id: String,
    pub original_image: String,
    pub manipulated_image: String,
    pub question: String,
    pub gold_original: Answer,
    pub gold_manipulated: Answer,
    pub removed: bool,
}

impl BeafItem {
    fn validate(&self) -> Result<()> {
        if self.removed && self.gold_manipulated != Answer::No {
            return Err(Error::validation(format!(
                "BEAF item {}: a question about a removed object must have gold answer `no` on the manipulated image",
                self.id
            )));
        }
        Ok(())
    }
}

/// Reads a JSON array of [`BeafItem`].
pub fn load_beaf_manifest(path: impl AsRef<Path>) -> Result<Vec<BeafItem>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let items: Vec<BeafItem> = serde_json::from_str(&text)?;
    let mut seen = std::collections::HashSet::new();
    for item in &items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::validation(format!("duplicate BEAF item id {}", item.id)));
        }
    }
    Ok(items)
}

/// Outcome counts over removed-object questions, plus discordant unchanged ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeafCells {
    pub tu: u64,
    pub ig: u64,
    pub sb_p: u64,
    pub sb_n: u64,
    pub discordant: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BeafMetrics {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub tu: Option<f64>,
    pub ig: Option<f64>,
    pub sb_p: Option<f64>,
    pub sb_n: Option<f64>,
    pub id: Option<f64>,
    pub f1_tuid: Option<f64>,
    pub removed_count: u64,
    pub unchanged_count: u64,
    pub cells: BeafCells,
}

/// Harmonic mean of TU and `100 − ID`.
pub fn f1_tuid(tu: f64, id: f64) -> f64 {
    harmonic_mean(tu, 100.0 - id)
}

pub fn beaf_metrics(records: &[BeafRecord]) -> BeafMetrics {
    let mut cells = [0u64; 4];
    let mut discordant = 0u64;
    let (mut removed, mut unchanged) = (0u64, 0u64);
    let mut counts = ConfusionCounts::default();
    for r in records {
        counts.record(r.gold_original, r.answer_original);
        counts.record(r.gold_manipulated, r.answer_manipulated);
        let (o, m) = (r.original_correct(), r.manipulated_correct());
        if r.removed {
            removed += 1;
            let cell = match (o, m) {
                (true, true) => 0,
                (false, false) => 1,
                (true, false) => 2,
                (false, true) => 3,
            };
            cells[cell] += 1;
        } else {
            unchanged += 1;
            if o != m {
                discordant += 1;
            }
        }
    }
    let frac = |n: u64, d: u64| (d > 0).then(|| 100.0 * n as f64 / d as f64);
    let tu = frac(cells[0], removed);
    let id = frac(discordant, unchanged);
    let overall = confusion_metrics(&counts);
    BeafMetrics {
        accuracy: overall.accuracy,
        f1: overall.f1,
        tu,
        ig: frac(cells[1], removed),
        sb_p: frac(cells[2], removed),
        sb_n: frac(cells[3], removed),
        id,
        f1_tuid: tu.zip(id).map(|(t, i)| f1_tuid(t, i)),
        removed_count: removed,
        unchanged_count: unchanged,
        cells: BeafCells {
            tu: cells[0],
            ig: cells[1],
            sb_p: cells[2],
            sb_n: cells[3],
            discordant,
        },
    }
}
