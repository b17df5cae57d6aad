//! Markdown and JSON reports over one or more persisted runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::{analyze_flips, compute_metrics, ConditionMetrics, FlipAnalysis};
use super::store::{read_failures, read_records, read_run_meta};
use super::Condition;
use crate::error::{Error, Result};
use crate::metrics::SynonymMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub records: u64,
    pub failures: u64,
    pub metrics: BTreeMap<Condition, ConditionMetrics>,
    /// Keyed `"{before}->{after}"`, against the original condition.
    pub flips: BTreeMap<String, FlipAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunReport>,
}

pub fn build_report(out_dir: &Path, run_ids: &[String], synonyms: &SynonymMap) -> Result<Report> {
    if run_ids.is_empty() {
        return Err(Error::validation("no run ids given"));
    }
    let mut runs = Vec::new();
    for id in run_ids {
        if id.trim().is_empty() {
            return Err(Error::validation("empty run id"));
        }
        let dir = out_dir.join(id);
        let meta = read_run_meta(&dir)?;
        let records = read_records(&dir)?;
        if records.is_empty() {
            return Err(Error::validation(format!("run `{id}` has no records")));
        }
        let done: std::collections::HashSet<_> = records.iter().map(|r| (r.sample_id.as_str(), r.condition)).collect();
        let failures = read_failures(&dir)?
            .iter()
            .filter(|f| !done.contains(&(f.sample_id.as_str(), f.condition)))
            .map(|f| (f.sample_id.clone(), f.condition))
            .collect::<std::collections::HashSet<_>>()
            .len() as u64;
        let metrics = compute_metrics(&records, synonyms)?;
        let mut flips = BTreeMap::new();
        if metrics.contains_key(&Condition::Original) {
            for other in metrics.keys().filter(|c| **c != Condition::Original) {
                match analyze_flips(&records, Condition::Original, *other) {
                    Ok(f) => {
                        flips.insert(format!("{}->{other}", Condition::Original), f);
                    }
                    Err(e) => tracing::warn!(run = %id, %other, error = %e, "flip analysis skipped"),
                }
            }
        }
        runs.push(RunReport {
            run_id: meta.run_id,
            config_hash: meta.config_hash,
            config: meta.config,
            records: records.len() as u64,
            failures,
            metrics,
            flips,
        });
    }
    Ok(Report { runs })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

fn delta(a: Option<f64>, b: Option<f64>) -> String {
    match (a, b) {
        (Some(base), Some(v)) => {
            let d = v - base;
            if d.abs() < 0.005 {
                "0.00".to_string()
            } else {
                format!("**{d:+.2}**")
            }
        }
        _ => "undefined".to_string(),
    }
}

type Row<'a> = (&'a str, Box<dyn Fn(&ConditionMetrics) -> Option<f64> + 'a>);

fn table(
    out: &mut String,
    metrics: &BTreeMap<Condition, ConditionMetrics>,
    conditions: &[Condition],
    rows: &[Row<'_>],
) {
    let has_base = conditions.contains(&Condition::Original);
    let others: Vec<Condition> = conditions
        .iter()
        .copied()
        .filter(|c| *c != Condition::Original)
        .collect();
    let mut header = String::from("| metric |");
    let mut rule = String::from("|---|");
    for c in conditions {
        let _ = write!(header, " {c} |");
        rule.push_str("---:|");
    }
    if has_base {
        for c in &others {
            let _ = write!(header, " Δ {c} |");
            rule.push_str("---:|");
        }
    }
    let _ = writeln!(out, "{header}\n{rule}");
    for (name, get) in rows {
        let mut line = format!("| {name} |");
        for c in conditions {
            let _ = write!(line, " {} |", cell(get(&metrics[c])));
        }
        if has_base {
            let base = get(&metrics[&Condition::Original]);
            for c in &others {
                let _ = write!(line, " {} |", delta(base, get(&metrics[c])));
            }
        }
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
}

pub fn render_markdown(report: &Report) -> String {
    let mut out = String::from("# Hallucination benchmark report\n\n");
    for run in &report.runs {
        let conditions: Vec<Condition> = run.metrics.keys().copied().collect();
        let _ = writeln!(out, "## Run `{}`\n", run.run_id);
        let _ = writeln!(
            out,
            "Records: {}. Unresolved failures: {}. Config hash: `{}`.\n",
            run.records, run.failures, run.config_hash
        );

        let mut strategies: Vec<_> = run.metrics.values().flat_map(|m| m.pope.keys().copied()).collect();
        strategies.sort();
        strategies.dedup();
        for s in strategies {
            let _ = writeln!(out, "### POPE ({s})\n");
            let rows: Vec<Row<'_>> = vec![
                (
                    "Accuracy",
                    Box::new(move |m| m.pope.get(&s).and_then(|p| p.metrics.accuracy)),
                ),
                (
                    "Precision",
                    Box::new(move |m| m.pope.get(&s).and_then(|p| p.metrics.precision)),
                ),
                (
                    "Recall",
                    Box::new(move |m| m.pope.get(&s).and_then(|p| p.metrics.recall)),
                ),
                ("F1", Box::new(move |m| m.pope.get(&s).and_then(|p| p.metrics.f1))),
                (
                    "Unparseable",
                    Box::new(move |m| m.pope.get(&s).map(|p| p.counts.unparseable as f64)),
                ),
            ];
            table(&mut out, &run.metrics, &conditions, &rows);
        }

        if run.metrics.values().any(|m| m.beaf.is_some()) {
            out.push_str("### BEAF\n\n");
            let rows: Vec<Row<'_>> = vec![
                ("TU", Box::new(|m| m.beaf.and_then(|b| b.tu))),
                ("IG", Box::new(|m| m.beaf.and_then(|b| b.ig))),
                ("SBp", Box::new(|m| m.beaf.and_then(|b| b.sb_p))),
                ("SBn", Box::new(|m| m.beaf.and_then(|b| b.sb_n))),
                ("ID", Box::new(|m| m.beaf.and_then(|b| b.id))),
                ("F1_TUID", Box::new(|m| m.beaf.and_then(|b| b.f1_tuid))),
                ("Accuracy", Box::new(|m| m.beaf.and_then(|b| b.accuracy))),
                ("F1", Box::new(|m| m.beaf.and_then(|b| b.f1))),
            ];
            table(&mut out, &run.metrics, &conditions, &rows);
        }

        if run.metrics.values().any(|m| m.chair.is_some()) {
            out.push_str("### CHAIR\n\n");
            let rows: Vec<Row<'_>> = vec![
                ("CHAIR_S", Box::new(|m| m.chair.map(|c| c.chair_s))),
                ("CHAIR_I", Box::new(|m| m.chair.map(|c| c.chair_i))),
            ];
            table(&mut out, &run.metrics, &conditions, &rows);
        }

        if !run.flips.is_empty() {
            out.push_str("### Answer flips\n\n| comparison | samples | false drop % | correction % | yes % before | yes % after |\n|---|---:|---:|---:|---:|---:|\n");
            for (k, f) in &run.flips {
                let _ = writeln!(
                    out,
                    "| {k} | {} | {:.2} | {:.2} | {} | {} |",
                    f.samples,
                    f.false_drop_rate,
                    f.correction_rate,
                    cell(f.yes_ratio_before),
                    cell(f.yes_ratio_after)
                );
            }
            out.push('\n');
        }

        let _ = writeln!(
            out,
            "### Configuration\n\n```json\n{}\n```\n",
            serde_json::to_string_pretty(&run.config).unwrap_or_default()
        );
    }
    out
}

/// Writes `{stem}.md` and `{stem}.json`.
pub fn write_report(report: &Report, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let md = dir.join(format!("{stem}.md"));
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&md, render_markdown(report))?;
    std::fs::write(&json, serde_json::to_string_pretty(report)?)?;
    Ok((md, json))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::analysis::tests::pope_record;
    use crate::harness::store::{init_run_dir, Appender, RunMeta};
    use crate::harness::RECORDS_FILE;
    use crate::metrics::{Answer, ParsedAnswer};

    fn write_run(dir: &Path, id: &str, conditions: &[Condition]) {
        let run = dir.join(id);
        init_run_dir(
            &run,
            &RunMeta {
                run_id: id.into(),
                config_hash: "h".into(),
                config: serde_json::json!({"seed": 1}),
            },
        )
        .unwrap();
        let mut app = Appender::open(&run.join(RECORDS_FILE)).unwrap();
        for i in 0..4 {
            for c in conditions {
                let gold = if i % 2 == 0 { Answer::Yes } else { Answer::No };
                let parsed = match (c, i) {
                    (Condition::Original, 0) => ParsedAnswer::No,
                    _ if gold == Answer::Yes => ParsedAnswer::Yes,
                    _ => ParsedAnswer::No,
                };
                app.append(&pope_record(&format!("s{i}"), *c, gold, parsed)).unwrap();
            }
        }
    }

    #[test]
    fn single_and_paired_runs() {
        let dir = tempfile::tempdir().unwrap();
        let syn = SynonymMap::coco_default();
        write_run(dir.path(), "one", &[Condition::Original]);
        write_run(dir.path(), "two", &[Condition::Original, Condition::Vap]);

        let r = build_report(dir.path(), &["one".into()], &syn).unwrap();
        let md = render_markdown(&r);
        assert!(md.contains("| metric | original |\n"), "{md}");
        assert!(!md.contains("Δ"));

        let r = build_report(dir.path(), &["two".into()], &syn).unwrap();
        let md = render_markdown(&r);
        assert!(md.contains("| metric | original | vap | Δ vap |"), "{md}");
        // accuracy 75 -> 100
        assert!(md.contains("| Accuracy | 75.00 | 100.00 | **+25.00** |"), "{md}");
        assert_eq!(r.runs[0].flips["original->vap"].corrections, 1);

        let (_, json) = write_report(&r, dir.path(), "report").unwrap();
        let back: Report = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn undefined_cells_and_bad_ids() {
        let dir = tempfile::tempdir().unwrap();
        let syn = SynonymMap::coco_default();
        let run = dir.path().join("neg");
        init_run_dir(
            &run,
            &RunMeta {
                run_id: "neg".into(),
                config_hash: "h".into(),
                config: serde_json::json!({}),
            },
        )
        .unwrap();
        let mut app = Appender::open(&run.join(RECORDS_FILE)).unwrap();
        app.append(&pope_record("s", Condition::Original, Answer::No, ParsedAnswer::No))
            .unwrap();
        let md = render_markdown(&build_report(dir.path(), &["neg".into()], &syn).unwrap());
        assert!(md.contains("| Precision | undefined |"), "{md}");

        assert!(build_report(dir.path(), &[], &syn).is_err());
        assert!(build_report(dir.path(), &["".into()], &syn).is_err());
        assert!(build_report(dir.path(), &["missing".into()], &syn).is_err());
    }
}
