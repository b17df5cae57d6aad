use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use vap_core::backends::mock::MockRules;
use vap_core::backends::server::{MockServer, MockServerOptions};
use vap_core::backends::{connect_embedder, connect_model, AuditLog};
use vap_core::config::AppConfig;
use vap_core::harness::{
    analyze_flips, beaf_samples, build_report, chair_samples, compute_metrics, pope_samples, read_records,
    run_benchmark, write_report, EvalSample, RunBackends, RunOptions,
};
use vap_core::image::{check_output_path, load_image, save_image};
use vap_core::metrics::{
    generate_pope_triplets, load_beaf_manifest, read_triplets_jsonl, write_triplets_jsonl, AnnotationSet, SynonymMap,
};
use vap_core::seed::derive_seed;
use vap_core::vap::{run_vap, PerturbationConfig};
use vap_core::{Error, Result};

use crate::{
    AnalyzeArgs, Benchmark, Cli, Command, EvalArgs, GenPopeArgs, GlobalArgs, PerturbArgs, ReportArgs, ServeMockArgs,
};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::Config(_)
        | Error::UnsupportedFormat(_)
        | Error::LossyFormat(_)
        | Error::ImageIo { .. }
        | Error::Json(_) => 2,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

pub fn dispatch(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Perturb(a) => perturb(g, a),
        Command::GenPope(a) => gen_pope(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Analyze(a) => analyze(g, a),
        Command::Report(a) => report(g, a),
        Command::ServeMock(a) => serve_mock(g, a),
    }
}

/// Config file, then flags; flags win.
fn load_config(g: &GlobalArgs) -> Result<AppConfig> {
    let mut c = match &g.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = g.seed {
        c.seed = Some(seed);
    }
    if let Some(out) = &g.out {
        c.out_dir = out.clone();
    }
    if let Some(url) = &g.backend_url {
        c.backends.override_url(url);
    }
    if let Some(n) = g.max_concurrency {
        if n == 0 {
            return Err(Error::Config("--max-concurrency must be >= 1".into()));
        }
        c.backends.override_concurrency(n);
    }
    c.resolve()
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn query_cost(p: &PerturbationConfig) -> serde_json::Value {
    let per_round = (p.num_queries + 1) as u64;
    let rounds = u64::from(p.rounds);
    let extra = if p.final_responses { 2 } else { 0 };
    json!({
        "loss_evaluations": rounds * per_round,
        "model_calls": 2 * rounds * per_round + 1 + extra,
        "embedding_calls": 3 * rounds * per_round,
    })
}

fn synonyms(path: Option<&PathBuf>) -> Result<SynonymMap> {
    match path {
        Some(p) => SynonymMap::from_file(p),
        None => Ok(SynonymMap::coco_default()),
    }
}

fn audit_log(enabled: bool, dir: &Path) -> Result<Option<AuditLog>> {
    if !enabled {
        return Ok(None);
    }
    std::fs::create_dir_all(dir)?;
    AuditLog::open(dir.join("audit.jsonl")).map(Some)
}

fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in patterns {
        if p.contains(['*', '?', '[']) {
            let matches = glob::glob(p).map_err(|e| Error::validation(format!("bad pattern `{p}`: {e}")))?;
            let before = paths.len();
            for m in matches {
                paths.push(m.map_err(|e| Error::validation(e.to_string()))?);
            }
            if paths.len() == before {
                return Err(Error::validation(format!("pattern `{p}` matched no files")));
            }
        } else {
            paths.push(PathBuf::from(p));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn perturb(g: &GlobalArgs, a: &PerturbArgs) -> Result<u8> {
    let mut cfg = load_config(g)?;
    if a.final_responses {
        cfg.perturbation.final_responses = true;
    }
    check_output_path(Path::new(&format!("out.{}", a.ext)))?;
    let inputs = expand_inputs(&a.images)?;
    if let Some(missing) = inputs.iter().find(|p| !p.is_file()) {
        return Err(Error::validation(format!(
            "input image {} does not exist",
            missing.display()
        )));
    }
    let plan: Vec<(PathBuf, PathBuf, PathBuf)> = inputs
        .iter()
        .map(|input| {
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            let dir = g
                .out
                .clone()
                .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            (
                input.clone(),
                dir.join(format!("{stem}.vap.{}", a.ext)),
                dir.join(format!("{stem}.vap.json")),
            )
        })
        .collect();

    if g.dry_run {
        print_json(&json!({
            "command": "perturb",
            "prompt": a.prompt,
            "perturb_backend": cfg.backends.perturb.label(),
            "embedder": cfg.backends.embedder.label(),
            "perturbation": cfg.perturbation,
            "seed": cfg.seed(),
            "query_cost_per_image": query_cost(&cfg.perturbation),
            "images": plan.iter().map(|(i, o, t)| json!({"input": i, "output": o, "trace": t})).collect::<Vec<_>>(),
        }))?;
        return Ok(0);
    }

    let audit_dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let audit = audit_log(cfg.audit, &audit_dir)?;
    let model = connect_model(&cfg.backends.perturb, audit.clone())?;
    let embedder = connect_embedder(&cfg.backends.embedder, audit)?;
    let budget_levels = cfg.perturbation.epsilon.floor() as u32;
    let mut failures = 0usize;

    for (input, output, trace_path) in &plan {
        let result = (|| -> Result<serde_json::Value> {
            let x = load_image(input)?;
            let name = input.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            let config = PerturbationConfig {
                seed: derive_seed(cfg.seed(), name),
                ..cfg.perturbation.clone()
            };
            let r = run_vap(&x, &a.prompt, model.as_ref(), embedder.as_ref(), &config)?;
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_image(&r.perturbed_image, output)?;
            let written = load_image(output)?;
            let levels = x.linf_levels(&written)?;
            let within = levels.is_some_and(|l| l <= budget_levels);
            let trace = json!({
                "input": input,
                "output": output,
                "prompt": a.prompt,
                "perturb_backend": model.id(),
                "embedder": embedder.id(),
                "config": config,
                "linf_levels": levels,
                "budget_levels": budget_levels,
                "within_budget": within,
                "loss_trace": r.loss_trace,
                "loss_evaluations": r.loss_evaluations,
                "model_calls": r.model_calls,
                "embedding_calls": r.embedding_calls,
                "initial_responses": r.initial_responses,
                "final_responses": r.final_responses,
            });
            std::fs::write(trace_path, serde_json::to_string_pretty(&trace)?)?;
            if a.check_budget && !within {
                return Err(Error::validation(format!(
                    "{}: L-inf distance {levels:?} levels exceeds budget {budget_levels}",
                    output.display()
                )));
            }
            Ok(trace)
        })();
        match result {
            Ok(t) => println!(
                "{} -> {} (linf {} levels, {} model calls)",
                input.display(),
                output.display(),
                t["linf_levels"],
                t["model_calls"]
            ),
            Err(e) => {
                if matches!(e, Error::Config(_)) {
                    return Err(e);
                }
                failures += 1;
                eprintln!("error: {}: {e}", input.display());
            }
        }
    }
    Ok(if failures > 0 { 1 } else { 0 })
}

fn gen_pope(g: &GlobalArgs, a: &GenPopeArgs) -> Result<u8> {
    let cfg = load_config(g)?;
    let mut options = cfg.pope;
    if let Some(k) = a.k {
        options.k = k;
    }
    if let Some(q) = a.questions_per_image {
        options.questions_per_image = q;
    }
    let annotations = AnnotationSet::from_coco_file(&a.annotations)?;
    let output = a
        .output
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("pope_triplets.jsonl"));
    let strategies = a.strategy.strategies();
    if g.dry_run {
        print_json(&json!({
            "command": "gen-pope",
            "images": annotations.images.len(),
            "vocabulary": annotations.vocabulary.len(),
            "strategies": strategies,
            "options": options,
            "seed": cfg.seed(),
            "output": output,
        }))?;
        return Ok(0);
    }
    let mut triplets = Vec::new();
    for s in strategies {
        triplets.extend(generate_pope_triplets(&annotations, s, options, cfg.seed())?);
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_triplets_jsonl(&triplets, std::io::BufWriter::new(std::fs::File::create(&output)?))?;
    println!("wrote {} triplets to {}", triplets.len(), output.display());
    Ok(0)
}

fn eval_samples(a: &EvalArgs) -> Result<Vec<EvalSample>> {
    match a.benchmark {
        Benchmark::Pope => {
            let triplets = read_triplets_jsonl(std::io::BufReader::new(std::fs::File::open(&a.input)?))?;
            let annotations = a.annotations.as_ref().map(AnnotationSet::from_coco_file).transpose()?;
            pope_samples(&triplets, &a.images, annotations.as_ref())
        }
        Benchmark::Beaf => beaf_samples(&load_beaf_manifest(&a.input)?, &a.images),
        Benchmark::Chair => {
            let annotations = AnnotationSet::from_coco_file(&a.input)?;
            Ok(chair_samples(&annotations, &a.images, &a.caption_prompt))
        }
    }
}

fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<u8> {
    let mut cfg = load_config(g)?;
    if let Some(c) = &a.conditions {
        if c.is_empty() {
            return Err(Error::Config("--conditions is empty".into()));
        }
        cfg.conditions = c.clone();
    }
    let syn = synonyms(a.synonyms.as_ref())?;
    let samples = eval_samples(a)?;
    if samples.is_empty() {
        return Err(Error::validation("the input contains no samples"));
    }
    let mut options = RunOptions::from_config(&cfg, a.run_id.clone());
    options.save_images = a.save_images;
    options.stop_after = a.stop_after;
    let run_dir = options.run_dir();

    if g.dry_run {
        let done = read_records(&run_dir).map(|r| r.len()).unwrap_or(0);
        print_json(&json!({
            "command": "eval",
            "run_id": options.run_id,
            "run_dir": run_dir,
            "config_hash": options.config_hash,
            "samples": samples.len(),
            "conditions": cfg.conditions,
            "jobs": samples.len() * cfg.conditions.len(),
            "already_persisted": done,
            "perturb_backend": cfg.backends.perturb.label(),
            "evaluate_backend": cfg.backends.evaluate().label(),
            "embedder": cfg.backends.embedder.label(),
            "query_cost_per_vap_sample": query_cost(&cfg.perturbation),
        }))?;
        return Ok(0);
    }

    let audit = audit_log(cfg.audit, &run_dir)?;
    let backends = RunBackends {
        perturb: connect_model(&cfg.backends.perturb, audit.clone())?,
        evaluate: connect_model(cfg.backends.evaluate(), audit.clone())?,
        embedder: connect_embedder(&cfg.backends.embedder, audit)?,
    };
    let summary = run_benchmark(&samples, &cfg.conditions, &backends, &options)?;
    let records = read_records(&run_dir)?;
    let metrics = compute_metrics(&records, &syn)?;
    let doc = json!({
        "run_id": summary.run_id,
        "run_dir": summary.dir,
        "planned": summary.planned,
        "skipped": summary.skipped,
        "written": summary.written,
        "failed": summary.failed,
        "interrupted": summary.interrupted,
        "metrics": metrics,
    });
    std::fs::write(run_dir.join("metrics.json"), serde_json::to_string_pretty(&doc)?)?;
    print_json(&doc)?;
    Ok(if summary.failed > 0 || summary.interrupted {
        1
    } else {
        0
    })
}

fn analyze(g: &GlobalArgs, a: &AnalyzeArgs) -> Result<u8> {
    let cfg = load_config(g)?;
    if a.run_id.trim().is_empty() {
        return Err(Error::validation("empty run id"));
    }
    let dir = cfg.out_dir.join(&a.run_id);
    vap_core::harness::read_run_meta(&dir)?;
    if g.dry_run {
        print_json(&json!({"command": "analyze", "run_dir": dir, "before": a.before, "after": a.after}))?;
        return Ok(0);
    }
    let records = read_records(&dir)?;
    let flips = analyze_flips(&records, a.before, a.after)?;
    let doc = json!({"run_id": a.run_id, "before": a.before, "after": a.after, "flips": flips});
    std::fs::write(
        dir.join(format!("flips_{}_{}.json", a.before, a.after)),
        serde_json::to_string_pretty(&doc)?,
    )?;
    print_json(&doc)?;
    Ok(0)
}

fn report(g: &GlobalArgs, a: &ReportArgs) -> Result<u8> {
    let cfg = load_config(g)?;
    let syn = synonyms(a.synonyms.as_ref())?;
    if g.dry_run {
        print_json(&json!({"command": "report", "out_dir": cfg.out_dir, "run_ids": a.run_ids, "name": a.name}))?;
        return Ok(0);
    }
    let report = build_report(&cfg.out_dir, &a.run_ids, &syn)?;
    let (md, json_path) = write_report(&report, &cfg.out_dir, &a.name)?;
    println!("wrote {} and {}", md.display(), json_path.display());
    Ok(0)
}

fn serve_mock(g: &GlobalArgs, a: &ServeMockArgs) -> Result<u8> {
    let addr: std::net::SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad listen address {}:{}: {e}", a.host, a.port)))?;
    let options = MockServerOptions {
        rules: MockRules::with_threshold(a.threshold),
        embed_dim: a.embed_dim,
        embed_seed: a.embed_seed,
    };
    if g.dry_run {
        print_json(
            &json!({"command": "serve-mock", "addr": addr.to_string(), "threshold": a.threshold, "embed_dim": a.embed_dim}),
        )?;
        return Ok(0);
    }
    let server = MockServer::bind(addr, options)?;
    println!("mock server listening on {}", server.base_url());
    std::io::stdout().flush()?;
    server.wait();
    Ok(0)
}
