//! `cogmcts` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 aborted run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cogmcts::actions::{parse_response, ActionKind, ParseContext};
use cogmcts::cop::oracle::{oracle_available, oracle_exact, relative_gap};
use cogmcts::cop::{generate_instances, FrameworkParams, SizeParams};
use cogmcts::exec::{ExecutorConfig, HeuristicExecutor};
use cogmcts::llm::{BackendConfig, BackendKind};
use cogmcts::orchestrator::{resume, run_in, RunError};
use cogmcts::{Dataset, Problem, RunConfig};

#[derive(Parser)]
#[command(name = "cogmcts", version, about = "LLM-guided tree search for heuristic design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search and record it in a run directory.
    Run(RunArgs),
    /// Generate a dataset document.
    GenInstances(GenArgs),
    /// Evaluate one heuristic on a dataset.
    Eval(EvalArgs),
    /// Print the trajectory, action table and knowledge summary of a run.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Scripted,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<Problem>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Response script for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset document to evaluate on instead of a generated one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Continue the run recorded in --out from its last checkpoint.
    #[arg(long)]
    resume: bool,
    #[arg(long = "disable-action")]
    disable_action: Vec<ActionKind>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    problem: Problem,
    #[arg(long, default_value_t = 64)]
    n_instances: usize,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_len: Option<f64>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Heuristic in response format: a braced description and one fenced block.
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// TOML file with framework parameters; problem defaults otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value = "python")]
    code_dialect: String,
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::GenInstances(a) => cmd_gen(a).map_err(Failure::from),
        Command::Eval(a) => cmd_eval(a).map_err(Failure::from),
        Command::Report(a) => cmd_report(a).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn backend_override(a: &RunArgs) -> Option<BackendConfig> {
    match (a.backend, &a.script) {
        (None, None) => None,
        (Some(BackendArg::Live), _) => Some(BackendConfig::default()),
        (_, Some(path)) => Some(BackendConfig::scripted(path)),
        (Some(BackendArg::Scripted), None) => Some(BackendConfig { kind: BackendKind::Scripted, ..BackendConfig::default() }),
    }
}

fn load_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text).map_err(anyhow::Error::msg)?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = a.problem {
        if p != cfg.problem {
            cfg.problem = p;
            cfg.framework = None;
        }
    }
    if let Some(b) = a.budget {
        cfg.search.budget = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = &a.dataset {
        cfg.dataset.path = Some(d.clone());
    }
    for act in &a.disable_action {
        if !cfg.disabled_actions.contains(act) {
            cfg.disabled_actions.push(*act);
        }
    }
    if let Some(b) = backend_override(a) {
        cfg.backend = b;
    }
    cfg.validate().map_err(anyhow::Error::msg)?;
    Ok(cfg)
}

fn run_failure(e: RunError) -> Failure {
    let code = match e {
        RunError::Aborted { .. } | RunError::Init(_) => 2,
        RunError::Config(_) | RunError::Io(_) => 1,
    };
    Failure { code, error: e.into() }
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let report = if a.resume {
        resume(&a.out, backend_override(&a)).map_err(run_failure)?
    } else {
        let cfg = load_config(&a)?;
        run_in(&cfg, &a.out).map_err(run_failure)?
    };
    println!("best reward: {}", report.best.reward);
    println!("best artifact: {}", report.best.artifact.digest);
    if let Some(b) = report.baseline_reward {
        println!("greedy baseline: {b}");
    }
    println!("budget used: {} ({} iterations, {} widenings)", report.t, report.iterations, report.widenings);
    println!("run directory: {}", a.out.display());
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let size = SizeParams { n: a.n, capacity: a.capacity, m: a.m, max_len: a.max_len };
    if a.n_instances == 0 || a.n == 0 {
        bail!("--n-instances and --n must be positive");
    }
    let ds = generate_instances(a.problem, a.n_instances, &size, a.seed);
    let doc = ds.to_document();
    let text = serde_json::to_string(&doc)?;
    std::fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", doc.digest);
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Dataset::from_document_json(&text).map_err(anyhow::Error::msg)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let text = std::fs::read_to_string(&a.artifact).with_context(|| format!("reading {}", a.artifact.display()))?;
    let ctx = ParseContext { problem: ds.problem, code_dialect: &a.code_dialect };
    let artifact = parse_response(&text, &ctx).map_err(|e| anyhow::anyhow!("artifact {}: {e}", a.artifact.display()))?;
    let params = match &a.params {
        Some(p) => {
            let t = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<FrameworkParams>(&t).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FrameworkParams::default_for(ds.problem),
    };
    let exec = HeuristicExecutor::new(ExecutorConfig { timeout_s: a.timeout, code_dialect: a.code_dialect.clone(), ..ExecutorConfig::default() });
    let res = exec.evaluate(&artifact, &ds, &params);
    let Some(reward) = res.reward.filter(|_| res.is_ok()) else {
        bail!("evaluation {:?}: {}", res.status, res.message.unwrap_or_default());
    };
    let objs = &res.objectives;
    let mean = objs.iter().sum::<f64>() / objs.len() as f64;
    let min = objs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = objs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("artifact: {}", artifact.digest);
    println!("reward: {reward}");
    println!("instances: {}", objs.len());
    println!("objective mean: {mean}");
    println!("objective min: {min}");
    println!("objective max: {max}");
    println!("sanitized instances: {}", res.sanitized_instances);
    if ds.instances.iter().all(oracle_available) {
        let sense = ds.problem.sense();
        let mut gaps = Vec::with_capacity(objs.len());
        for (inst, &obj) in ds.instances.iter().zip(objs) {
            let opt = oracle_exact(inst)?;
            gaps.push(relative_gap(sense, obj, opt));
        }
        let gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        println!("mean gap vs optimum: {:.4}%", gap * 100.0);
    } else {
        println!("mean gap vs optimum: n/a (instances too large for the exact oracle)");
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = cogmcts::summary::render_run_dir(&a.run_dir).map_err(anyhow::Error::msg)?;
    print!("{text}");
    Ok(())
}
