//! The `adapmen` command line.

pub mod config;
pub mod output;
pub mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use adapmen_core::analysis::{dq_tail_analysis, TailWeighting};
use adapmen_core::gating::Gate;
use adapmen_core::mdp::{dump_text, value_iteration_finite};
use adapmen_core::training::{train, Algorithm, IterationMetrics};
use adapmen_hitl::{ServerConfig, Session, SessionConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use config::ExperimentConfig;
use output::RunSummary;
use verify::{ScalingSetup, ScalingVerdict};

/// Output root when `--out` is not given.
pub const OUT_ENV: &str = "ADAPMEN_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("training failed: {0}")]
    Train(String),
    #[error("verification failed: {0}")]
    Failed(String),
    #[error("server: {0}")]
    Serve(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adapmen", about = "AdapMen imitation-learning experiments on tabular MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed and write metrics.
    Run(RunArgs),
    /// Check the bounds numerically on random instances.
    Verify(VerifyArgs),
    /// Final gap against horizon for BC, AdapMen and DAgger.
    Scaling(ScalingArgs),
    /// Sample the D_Q distribution of a trained learner.
    DqHist(DqHistArgs),
    /// Serve interactive sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `dotted.key=value`, applied after the file is read.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: `$ADAPMEN_OUT/<out_dir or config name>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run only this seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Bounds,
    Tails,
    Scaling,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long = "instances", default_value_t = 100)]
    pub instance_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// D_Q samples per instance for the tails suite.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Write JSON reports here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// Base config (env family, criterion, learner, steps); defaults to the
    /// slip-free 8-cell cliff walk.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub horizons: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 0.1)]
    pub label_noise: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DqHistArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn main_with(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::DqHist(a) => cmd_dq_hist(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// `--out`, else the config's `out_dir` (or file stem) under the root.
pub fn resolve_out(args: &ConfigArgs, config: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    let name = config.out_dir.clone().unwrap_or_else(|| {
        PathBuf::from(args.config.file_stem().unwrap_or_else(|| "experiment".as_ref()))
    });
    output_root().join(name)
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let config = ExperimentConfig::load(&args.config, &args.overrides)?;
    let out = resolve_out(args, &config);
    Ok((config, out))
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (mut config, out) = load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    } else if let Some(seeds) = args.seeds {
        if seeds.is_empty() {
            return Err(CliError::Config("`--seeds` must not be empty".into()));
        }
        config.seeds = seeds;
    }
    let summary = run_experiment(&config, &out)?;
    println!(
        "{:?}: {} seed(s), final gap {:.4} ± {:.4}, final delta {:.4}; wrote {}",
        summary.algorithm,
        summary.seeds.len(),
        summary.final_suboptimality_gap.mean,
        summary.final_suboptimality_gap.std,
        summary.final_delta.mean,
        out.display()
    );
    Ok(())
}

/// Trains every seed (in parallel) and writes `config.toml`, `mdp.txt`,
/// `metrics-seed<N>.{jsonl,csv}` and `summary.json` into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let train_config = config.train_config();
    let runs: Vec<(u64, Vec<IterationMetrics>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            train(&train_config, seed, false)
                .map(|r| (seed, r.metrics))
                .map_err(|e| CliError::Train(format!("seed {seed}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    output::create_dir(out)?;
    output::write(&out.join("config.toml"), config.to_toml())?;
    let mdp = config.env.build().map_err(|e| CliError::Config(e.to_string()))?;
    output::write(&out.join("mdp.txt"), dump_text(&mdp))?;
    for (seed, metrics) in &runs {
        output::write(
            &out.join(format!("metrics-seed{seed}.jsonl")),
            output::metrics_jsonl(*seed, config.algorithm, metrics),
        )?;
        output::write(&out.join(format!("metrics-seed{seed}.csv")), output::metrics_csv(*seed, metrics)?)?;
    }
    let summary = RunSummary::new(config.algorithm, &runs);
    output::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    if let Some(out) = &args.out {
        output::create_dir(out)?;
    }
    let mut failures = Vec::new();
    if matches!(args.suite, Suite::Bounds | Suite::All) {
        let summary = verify::bounds_suite(args.instance_count, args.seed);
        for line in verify::describe_sweep(&summary) {
            println!("{line}");
        }
        if let Some(out) = &args.out {
            output::write_json(&out.join("bounds.json"), &summary)?;
        }
        if !summary.all_hold() {
            let which: Vec<String> = summary.violations.iter().map(|v| v.description.clone()).collect();
            failures.push(format!("bound violations on {}", which.join("; ")));
        }
    }
    if matches!(args.suite, Suite::Tails | Suite::All) {
        let summary = verify::tails_suite(args.instance_count, args.seed, args.samples);
        let monotone = summary.checks.iter().filter(|c| c.monotone).count();
        let repro = summary.checks.iter().filter(|c| c.reproducible).count();
        let envelope: usize = summary.checks.iter().map(|c| c.envelope_satisfied).sum();
        let points: usize = summary.checks.iter().map(|c| c.report.grid.len()).sum();
        println!(
            "tails: {} instances, monotone {monotone}, reproducible {repro}, envelope met at {envelope}/{points} grid points",
            summary.instances
        );
        if let Some(out) = &args.out {
            output::write_json(&out.join("tails.json"), &summary)?;
        }
        if !summary.passed() {
            failures.push("tail reports not monotone or not reproducible".into());
        }
    }
    if matches!(args.suite, Suite::Scaling | Suite::All) {
        let setup = ScalingSetup::default();
        let outcome = setup.run().map_err(|e| CliError::Train(e.to_string()))?;
        let verdict = ScalingVerdict::new(&outcome);
        print_scaling(&outcome);
        println!(
            "scaling: BC slope >= {} {}, AdapMen slope <= {} {}, DAgger envelope {}",
            verify::BC_MIN_SLOPE,
            ok(verdict.bc_ok),
            verify::ADAPMEN_MAX_SLOPE,
            ok(verdict.adapmen_ok),
            ok(verdict.dagger_envelope_holds)
        );
        if let Some(out) = &args.out {
            output::write_json(
                &out.join("scaling.json"),
                &serde_json::json!({ "setup": setup, "outcome": outcome, "verdict": verdict }),
            )?;
        }
        if !verdict.passed() {
            failures.push("scaling slope windows not met".into());
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failures.join("; ")))
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn print_scaling(outcome: &adapmen_core::analysis::ScalingOutcome) {
    for r in &outcome.reports {
        let gaps: Vec<String> = r
            .points
            .iter()
            .map(|p| format!("H={}: {:.3}±{:.3}", p.horizon, p.mean_gap, p.std_gap))
            .collect();
        println!("{:?}: slope {:.3} ({})", r.algorithm, r.slope, gaps.join(", "));
    }
}

fn cmd_scaling(args: ScalingArgs) -> Result<(), CliError> {
    let mut setup = ScalingSetup::default();
    if let Some(path) = &args.config {
        setup.base = ExperimentConfig::load(path, &args.overrides)?.train_config();
    } else if !args.overrides.is_empty() {
        return Err(CliError::Config("`--override` needs `--config`".into()));
    }
    setup.horizons = args.horizons;
    if let Some(seeds) = args.seeds {
        setup.seeds = seeds;
    }
    setup.label_noise = args.label_noise;
    let outcome = setup.run().map_err(|e| CliError::Config(e.to_string()))?;
    print_scaling(&outcome);
    let verdict = ScalingVerdict::new(&outcome);
    if let Some(out) = &args.out {
        output::create_dir(out)?;
        output::write_json(
            &out.join("scaling.json"),
            &serde_json::json!({ "setup": setup, "outcome": outcome, "verdict": verdict }),
        )?;
    }
    Ok(())
}

fn cmd_dq_hist(args: DqHistArgs) -> Result<(), CliError> {
    let (config, out) = load(&args.config)?;
    let seed = args.seed.unwrap_or(config.seeds[0]);
    let train_config = config.train_config();
    let run = train(&train_config, seed, false).map_err(|e| CliError::Train(e.to_string()))?;
    let mdp = config.env.build().map_err(|e| CliError::Config(e.to_string()))?;
    let (q, pi) = value_iteration_finite(&mdp);
    let gate = Gate::new(config.criterion.kind, q, pi);
    let weighting = match (config.algorithm, run.metrics.last()) {
        (Algorithm::Adapmen, Some(m)) => TailWeighting::Teacher { p: m.p },
        _ => TailWeighting::Learner,
    };
    let report = dq_tail_analysis(&mdp, &gate, &run.learner, weighting, args.samples, seed);
    output::create_dir(&out)?;
    output::write(&out.join(format!("dq-samples-seed{seed}.txt")), report.samples_text())?;
    output::write_json(
        &out.join(format!("dq-tail-seed{seed}.json")),
        &serde_json::json!({ "seed": seed, "weighting": weighting, "report": report }),
    )?;
    println!(
        "D_Q: {} samples, mean {:.4}, std {:.4}, survival monotone {}; wrote {}",
        report.sample_count,
        report.mean,
        report.std,
        report.survival_is_monotone(),
        out.display()
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let (config, out) = load(&args.config)?;
    let session = SessionConfig {
        train: config.train_config(),
        seed: args.seed.unwrap_or(config.seeds[0]),
        mode: config.serve.mode,
    };
    // Refuse to start on anything a session would reject.
    Session::new(0, session.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let log_dir = config.serve.log_dir.clone().unwrap_or_else(|| out.join("sessions"));
    output::create_dir(&log_dir)?;
    let server = ServerConfig {
        session,
        step_delay: Duration::from_millis(config.serve.step_delay_ms),
        response_timeout: config.serve.response_timeout_ms.map(Duration::from_millis),
        log_dir: Some(log_dir),
    };
    let port = args.port.unwrap_or(config.serve.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Serve(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), port))
            .await
            .map_err(|e| CliError::Serve(format!("cannot listen on {}:{port}: {e}", args.host)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Serve(e.to_string()))?;
        println!("listening on http://{addr} (session: ws://{addr}/session)");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        adapmen_hitl::serve(listener, server, shutdown)
            .await
            .map_err(|e| CliError::Serve(e.to_string()))
    })
}
