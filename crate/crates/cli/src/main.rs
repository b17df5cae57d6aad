//! `vap`: perturbation, POPE triplet generation, benchmark evaluation,
//! flip analysis, reporting and the mock model server.
//!
//! Exit codes: 0 success, 1 partial or runtime failure, 2 configuration or usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vap_core::harness::Condition;
use vap_core::metrics::PopeStrategy;

#[derive(Parser, Debug)]
#[command(
    name = "vap",
    version,
    about = "Black-box visual perturbations and hallucination benchmarks"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Configuration file (.toml or .json); unknown keys are an error.
    #[arg(long, global = true, env = "VAP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (run directories for `eval`, images for `perturb`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base URL for every model backend (e.g. http://127.0.0.1:8089/v1 or mock://model).
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    /// Print the resolved plan and exit without contacting any backend.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Maximum in-flight requests per backend.
    #[arg(long, global = true)]
    pub max_concurrency: Option<usize>,
    /// More logging (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize a perturbation for each image and write `<stem>.vap.png` plus `<stem>.vap.json`.
    Perturb(PerturbArgs),
    /// Generate POPE yes/no triplets from COCO-style annotations.
    GenPope(GenPopeArgs),
    /// Run a benchmark over the configured conditions and persist every record.
    Eval(EvalArgs),
    /// Compare two conditions of a run: false drops and corrections.
    Analyze(AnalyzeArgs),
    /// Render markdown and JSON reports for one or more runs.
    Report(ReportArgs),
    /// Serve the deterministic mock model over HTTP.
    ServeMock(ServeMockArgs),
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    /// Input PNG files or glob patterns.
    #[arg(required = true)]
    pub images: Vec<String>,
    /// Prompt the perturbation is optimized for.
    #[arg(long, default_value = vap_core::harness::DEFAULT_CAPTION_PROMPT)]
    pub prompt: String,
    /// Output image extension; only lossless png is accepted.
    #[arg(long, default_value = "png")]
    pub ext: String,
    /// Reload each written image and verify the L∞ budget; exit 1 on violation.
    #[arg(long)]
    pub check_budget: bool,
    /// Also query the model on the final image (2 extra model calls per image).
    #[arg(long)]
    pub final_responses: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Random,
    Popular,
    Adversarial,
    All,
}

impl StrategyArg {
    pub fn strategies(self) -> Vec<PopeStrategy> {
        match self {
            StrategyArg::Random => vec![PopeStrategy::Random],
            StrategyArg::Popular => vec![PopeStrategy::Popular],
            StrategyArg::Adversarial => vec![PopeStrategy::Adversarial],
            StrategyArg::All => PopeStrategy::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
pub struct GenPopeArgs {
    /// COCO-style instances JSON.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub strategy: StrategyArg,
    /// Negatives considered per image (popular/adversarial ranking depth).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub questions_per_image: Option<usize>,
    /// Output JSONL file; defaults to `<out>/pope_triplets.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Benchmark {
    Pope,
    Beaf,
    Chair,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub benchmark: Benchmark,
    /// POPE: triplets JSONL. BEAF: manifest JSON. CHAIR: COCO-style annotations JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory holding the images referenced by the input.
    #[arg(long)]
    pub images: PathBuf,
    /// POPE only: annotations used to resolve image file names.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Run identifier; defaults to a prefix of the config hash. Re-running resumes.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Comma-separated conditions; overrides the config file.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<Condition>>,
    /// CHAIR synonym file; defaults to the bundled COCO list.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// CHAIR caption prompt.
    #[arg(long, default_value = vap_core::harness::DEFAULT_CAPTION_PROMPT)]
    pub caption_prompt: String,
    /// Save the evaluated perturbed images under the run directory.
    #[arg(long)]
    pub save_images: bool,
    /// Stop after persisting this many records (simulates an interrupted run).
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub run_id: String,
    #[arg(long, default_value = "original")]
    pub before: Condition,
    #[arg(long, default_value = "vap")]
    pub after: Condition,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// One or more run ids under the output directory.
    #[arg(long = "run-id", num_args = 1.., required = true)]
    pub run_ids: Vec<String>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// File stem of the written report.
    #[arg(long, default_value = "report")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct ServeMockArgs {
    #[arg(long, default_value_t = 8089)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Mean-brightness threshold of the oracle.
    #[arg(long, default_value_t = vap_core::backends::mock::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = vap_core::backends::mock::DEFAULT_EMBED_DIM)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging(cli.global.verbose);
    match commands::dispatch(&cli) {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
