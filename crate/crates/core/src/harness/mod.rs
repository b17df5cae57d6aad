//! Run orchestration: drives the original / Gaussian / VAP conditions over an
//! evaluation set, persists every result as JSON lines, resumes interrupted
//! runs, and computes comparative analyses and reports.

mod analysis;
mod report;
mod run;
mod samples;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use analysis::{analyze_flips, compute_metrics, ConditionMetrics, FlipAnalysis, PopeMetrics};
pub use report::{build_report, render_markdown, write_report, Report, RunReport};
pub use run::{run_benchmark, RunBackends, RunOptions, RunSummary};
pub use samples::{beaf_samples, chair_samples, pope_samples, DEFAULT_CAPTION_PROMPT};
pub use store::{read_failures, read_records, read_run_meta, RunMeta, FAILURES_FILE, RECORDS_FILE, RUN_META_FILE};

use crate::error::{Error, Result};
use crate::metrics::{Answer, ParsedAnswer, PopeStrategy};
pub use crate::vap::gaussian_baseline;
use crate::vap::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Original,
    Gaussian,
    Vap,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Gaussian => "gaussian",
            Condition::Vap => "vap",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Condition::Original),
            "gaussian" => Ok(Condition::Gaussian),
            "vap" => Ok(Condition::Vap),
            other => Err(Error::validation(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeafSide {
    Original,
    Manipulated,
}

/// What a sample measures and how its response is scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SampleTask {
    Pope {
        image_id: String,
        strategy: PopeStrategy,
        object: String,
        ground_truth: Answer,
    },
    Beaf {
        item_id: String,
        side: BeafSide,
        ground_truth: Answer,
        removed: bool,
    },
    Chair {
        image_id: String,
        annotated_objects: BTreeSet<String>,
    },
}

impl SampleTask {
    pub fn ground_truth(&self) -> Option<Answer> {
        match self {
            SampleTask::Pope { ground_truth, .. } | SampleTask::Beaf { ground_truth, .. } => Some(*ground_truth),
            SampleTask::Chair { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: String,
    pub image: std::path::PathBuf,
    pub prompt: String,
    pub task: SampleTask,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latencies {
    /// Wall time spent producing the condition's image.
    pub perturb_ms: f64,
    /// Latency of the evaluation query.
    pub evaluate_ms: f64,
}

/// One persisted line per (sample, condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub sample_id: String,
    pub condition: Condition,
    pub image: String,
    pub prompt: String,
    pub response_text: String,
    /// `None` for free-form (caption) tasks.
    pub parsed_answer: Option<ParsedAnswer>,
    pub correct: Option<bool>,
    pub task: SampleTask,
    /// Per-round loss of the optimizer; VAP only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_trace: Option<Vec<LossBreakdown>>,
    /// `‖x̂ − x‖∞` in 1/255 levels.
    pub linf_levels: u32,
    pub latencies: Latencies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_backend: Option<String>,
    pub evaluate_backend: String,
    pub config_hash: String,
    pub seed: u64,
}

impl RunRecord {
    pub fn key(&self) -> (&str, Condition) {
        (&self.sample_id, self.condition)
    }
}

/// A (sample, condition) that failed; retried on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub run_id: String,
    pub sample_id: String,
    pub condition: Condition,
    pub error: String,
    pub config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_parsing_and_task_serde() {
        assert_eq!("VAP".parse::<Condition>().unwrap(), Condition::Vap);
        assert!("noise".parse::<Condition>().is_err());
        let t = SampleTask::Pope {
            image_id: "1".into(),
            strategy: PopeStrategy::Popular,
            object: "dog".into(),
            ground_truth: Answer::No,
        };
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"kind\":\"pope\""), "{json}");
        assert_eq!(serde_json::from_str::<SampleTask>(&json).unwrap(), t);
        assert_eq!(t.ground_truth(), Some(Answer::No));
    }
}
