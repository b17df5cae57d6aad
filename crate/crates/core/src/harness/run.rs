use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::bounded;

use super::store::{init_run_dir, repair_trailing_line, Appender, RunMeta};
use super::{Condition, EvalSample, FailureRecord, Latencies, RunRecord, FAILURES_FILE, RECORDS_FILE};
use crate::backends::{TextEmbedder, VisionModel};
use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, ImageTensor};
use crate::metrics::parse_yes_no;
use crate::seed::derive_seed;
use crate::vap::{gaussian_baseline, run_vap, PerturbationConfig};

#[derive(Clone)]
pub struct RunBackends {
    /// Queried by the optimizer.
    pub perturb: Arc<dyn VisionModel>,
    /// Answers the benchmark prompt; may differ from `perturb`.
    pub evaluate: Arc<dyn VisionModel>,
    pub embedder: Arc<dyn TextEmbedder>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_id: String,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub perturbation: PerturbationConfig,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Write the evaluated images of non-original conditions under `images/`.
    pub save_images: bool,
    /// Stop after persisting this many new records, as if the process died.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    /// Options for `config`; the run id defaults to a prefix of the config hash.
    pub fn from_config(config: &AppConfig, run_id: Option<String>) -> Self {
        let config_hash = config.config_hash();
        Self {
            run_id: run_id.unwrap_or_else(|| config_hash[..12].to_string()),
            out_dir: config.out_dir.clone(),
            workers: config.workers,
            perturbation: config.perturbation.clone(),
            seed: config.seed(),
            config_hash,
            config: serde_json::to_value(config.redacted()).unwrap_or_default(),
            save_images: false,
            stop_after: None,
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    /// Sample × condition pairs in the plan.
    pub planned: usize,
    /// Pairs already persisted before this invocation.
    pub skipped: usize,
    pub written: usize,
    pub failed: usize,
    pub interrupted: bool,
    /// Records produced by this invocation, in completion order.
    pub records: Vec<RunRecord>,
}

enum Outcome {
    Done(Box<RunRecord>),
    Failed(FailureRecord),
}

fn quantized(x: &ImageTensor) -> Result<ImageTensor> {
    ImageTensor::from_rgb8(x.height(), x.width(), &x.to_rgb8())
}

fn file_stem(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn process(
    sample: &EvalSample,
    condition: Condition,
    backends: &RunBackends,
    options: &RunOptions,
) -> Result<RunRecord> {
    let image = load_image(&sample.image)?;
    let sample_seed = derive_seed(options.seed, &sample.sample_id);
    let started = Instant::now();
    let (evaluated, loss_trace, perturb_backend) = match condition {
        Condition::Original => (image.clone(), None, None),
        Condition::Gaussian => {
            let noisy = gaussian_baseline(
                &image,
                options.perturbation.epsilon,
                derive_seed(sample_seed, "gaussian"),
            )?;
            (quantized(&noisy)?, None, None)
        }
        Condition::Vap => {
            let config = PerturbationConfig {
                seed: sample_seed,
                ..options.perturbation.clone()
            };
            let result = run_vap(
                &image,
                &sample.prompt,
                backends.perturb.as_ref(),
                backends.embedder.as_ref(),
                &config,
            )?;
            (
                quantized(&result.perturbed_image)?,
                Some(result.loss_trace),
                Some(backends.perturb.id().to_string()),
            )
        }
    };
    let perturb_ms = started.elapsed().as_secs_f64() * 1000.0;
    if options.save_images && condition != Condition::Original {
        let dir = options.run_dir().join("images");
        std::fs::create_dir_all(&dir)?;
        save_image(
            &evaluated,
            dir.join(format!("{}.{condition}.png", file_stem(&sample.sample_id))),
        )?;
    }
    let linf_levels = match image.linf_levels(&evaluated)? {
        Some(l) => l,
        None => (image.linf_distance(&evaluated)? * 255.0).round() as u32,
    };

    let response = backends.evaluate.respond(&evaluated, Some(&sample.prompt))?;
    let (parsed_answer, correct) = match sample.task.ground_truth() {
        Some(gold) => {
            let parsed = parse_yes_no(&response.text);
            (Some(parsed), Some(parsed.matches(gold)))
        }
        None => (None, None),
    };
    Ok(RunRecord {
        run_id: options.run_id.clone(),
        sample_id: sample.sample_id.clone(),
        condition,
        image: sample.image.display().to_string(),
        prompt: sample.prompt.clone(),
        response_text: response.text,
        parsed_answer,
        correct,
        task: sample.task.clone(),
        loss_trace,
        linf_levels,
        latencies: Latencies {
            perturb_ms,
            evaluate_ms: response.latency.as_secs_f64() * 1000.0,
        },
        perturb_backend,
        evaluate_backend: backends.evaluate.id().to_string(),
        config_hash: options.config_hash.clone(),
        seed: sample_seed,
    })
}

/// Runs every sample under every condition and appends one record per pair
/// to `records.jsonl` in the run directory. Pairs already persisted are
/// skipped, so re-running resumes an interrupted run. Per-pair failures go
/// to `failures.jsonl` and are retried on the next invocation.
pub fn run_benchmark(
    samples: &[EvalSample],
    conditions: &[Condition],
    backends: &RunBackends,
    options: &RunOptions,
) -> Result<RunSummary> {
    if options.run_id.is_empty() || options.run_id.contains(['/', '\\']) || options.run_id.starts_with('.') {
        return Err(Error::Config(format!("invalid run id `{}`", options.run_id)));
    }
    if conditions.is_empty() {
        return Err(Error::Config("no conditions to run".into()));
    }
    if options.workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::validation(format!("duplicate sample id {}", s.sample_id)));
        }
    }

    let dir = options.run_dir();
    init_run_dir(
        &dir,
        &RunMeta {
            run_id: options.run_id.clone(),
            config_hash: options.config_hash.clone(),
            config: options.config.clone(),
        },
    )?;
    let records_path = dir.join(RECORDS_FILE);
    repair_trailing_line(&records_path)?;
    repair_trailing_line(&dir.join(FAILURES_FILE))?;
    let existing = super::store::read_records(&dir)?;
    if let Some(r) = existing.iter().find(|r| r.config_hash != options.config_hash) {
        return Err(Error::Config(format!(
            "record {} / {} carries config hash {}, expected {}",
            r.sample_id, r.condition, r.config_hash, options.config_hash
        )));
    }
    let done: HashSet<(String, Condition)> = existing.iter().map(|r| (r.sample_id.clone(), r.condition)).collect();

    let jobs: Vec<(&EvalSample, Condition)> = samples
        .iter()
        .flat_map(|s| conditions.iter().map(move |c| (s, *c)))
        .filter(|(s, c)| !done.contains(&(s.sample_id.clone(), *c)))
        .collect();
    let planned = samples.len() * conditions.len();
    let skipped = planned - jobs.len();
    tracing::info!(run_id = %options.run_id, planned, skipped, pending = jobs.len(), "starting run");

    let mut records_out = Appender::open(&records_path)?;
    let mut failures_out = Appender::open(&dir.join(FAILURES_FILE))?;
    let stop = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    let (tx, rx) = bounded::<Outcome>(options.workers * 2);
    let mut summary = RunSummary {
        run_id: options.run_id.clone(),
        dir: dir.clone(),
        planned,
        skipped,
        written: 0,
        failed: 0,
        interrupted: false,
        records: Vec::new(),
    };

    let sink: Result<()> = std::thread::scope(|scope| {
        // owned here so an early return unblocks the workers
        let rx = rx;
        for _ in 0..options.workers.min(jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, stop, next) = (&jobs, &stop, &next);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(sample, condition)) = jobs.get(i) else {
                    break;
                };
                let outcome = match process(sample, condition, backends, options) {
                    Ok(r) => Outcome::Done(Box::new(r)),
                    Err(e) => {
                        tracing::warn!(sample = %sample.sample_id, %condition, error = %e, "sample failed");
                        Outcome::Failed(FailureRecord {
                            run_id: options.run_id.clone(),
                            sample_id: sample.sample_id.clone(),
                            condition,
                            error: e.to_string(),
                            config_hash: options.config_hash.clone(),
                        })
                    }
                };
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for outcome in rx.iter() {
            match outcome {
                Outcome::Done(record) => {
                    records_out.append(&*record)?;
                    summary.written += 1;
                    summary.records.push(*record);
                }
                Outcome::Failed(f) => {
                    failures_out.append(&f)?;
                    summary.failed += 1;
                }
            }
            if options.stop_after.is_some_and(|n| summary.written >= n) {
                summary.interrupted = true;
                stop.store(true, Ordering::SeqCst);
                break;
            }
        }
        drop(rx);
        Ok(())
    });
    sink?;
    tracing::info!(
        run_id = %summary.run_id,
        written = summary.written,
        failed = summary.failed,
        interrupted = summary.interrupted,
        "run finished"
    );
    Ok(summary)
}
