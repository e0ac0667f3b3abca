//! Command-line front end: run simulations and toy-policy training from
//! a TOML config, plan activation memory, and summarize trace files.
//!
//! Exit codes are a stable contract: 0 on success, 2 on configuration or
//! usage errors, 1 on runtime IO failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asyncrl::config::{load_config, ConfigError, RunConfig};
use asyncrl::metrics::{
    activation_memory, format_bytes, off_policy_age_histogram, save_curve_csv, throughput_report,
};
use asyncrl::simengine::{run_schedule, train_toy_policy, Mode, SimOutcome};
use asyncrl::trace::SimTrace;

#[derive(Parser)]
#[command(name = "asyncrl", version, about = "Asynchronous RL training engine, desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheduling simulation; writes trace.jsonl and summary.json.
    Simulate {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Where outputs go; defaults to $ASYNCRL_OUTPUT_DIR, then `.`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scheduling mode (synchronous, async_<k>,
        /// continuous_inflight).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train the toy policy; writes curve.csv, params.json and trace.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of trainer steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Compute the activation-memory budget for a model shape.
    PlanMemory {
        #[arg(long)]
        layers: u64,
        #[arg(long)]
        seq_len: u64,
        #[arg(long)]
        hidden: u64,
        /// Bytes per activation element (2 for bf16).
        #[arg(long)]
        bytes: u64,
        /// Report binary gibibytes instead of decimal gigabytes.
        #[arg(long)]
        gib: bool,
    },
    /// Summarize a previously written trace file.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Learning-curve CSV to fold into the summary.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

enum AppError {
    /// Bad configuration or arguments; exit 2.
    Config(String),
    /// Runtime failure (IO, malformed inputs); exit 1.
    Runtime(String),
}

impl From<ConfigError> for AppError {
    fn from(err: ConfigError) -> Self {
        match err {
            ConfigError::Io(e) => AppError::Runtime(format!("cannot read config file: {e}")),
            other => AppError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(err: std::io::Error) -> Self {
        AppError::Runtime(err.to_string())
    }
}

impl From<asyncrl::simengine::SimError> for AppError {
    fn from(err: asyncrl::simengine::SimError) -> Self {
        AppError::Runtime(err.to_string())
    }
}

impl From<asyncrl::trace::TraceError> for AppError {
    fn from(err: asyncrl::trace::TraceError) -> Self {
        AppError::Runtime(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Simulate { config, output_dir, seed, mode } => {
            let cfg = load_overridden(&config, seed, mode, None)?;
            let outcome = run_schedule(&cfg)?;
            let dir = resolve_output_dir(output_dir)?;
            write_run_outputs(&outcome, &dir, false)?;
            println!("wrote {} and {}", dir.join("trace.jsonl").display(), dir.join("summary.json").display());
            Ok(())
        }
        Command::Train { config, output_dir, seed, steps } => {
            let cfg = load_overridden(&config, seed, None, steps)?;
            let outcome = train_toy_policy(&cfg)?;
            let dir = resolve_output_dir(output_dir)?;
            write_run_outputs(&outcome, &dir, true)?;
            println!(
                "trained {} steps; wrote {} and {}",
                outcome.completed_steps,
                dir.join("curve.csv").display(),
                dir.join("params.json").display()
            );
            Ok(())
        }
        Command::PlanMemory { layers, seq_len, hidden, bytes, gib } => {
            if layers == 0 || seq_len == 0 || hidden == 0 || bytes == 0 {
                return Err(AppError::Config("plan-memory arguments must be positive".into()));
            }
            let plan = activation_memory(layers, seq_len, hidden, bytes)
                .map_err(|e| AppError::Config(e.to_string()))?;
            println!(
                "{} layers x {} tokens x {} hidden x {} bytes = {} bytes ({})",
                plan.layers,
                plan.seq_len,
                plan.hidden_size,
                plan.bytes_per_element,
                plan.total_bytes,
                format_bytes(plan.total_bytes, gib)
            );
            Ok(())
        }
        Command::Report { trace, curve } => {
            let trace = SimTrace::load(trace)?;
            trace.validate()?;
            let mut summary = serde_json::json!({
                "throughput": throughput_report(&trace),
                "off_policy_age_histogram": off_policy_age_histogram(&trace),
            });
            if let Some(path) = curve {
                summary["curve"] = curve_summary(&path)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
    }
}

fn load_overridden(
    path: &Path,
    seed: Option<u64>,
    mode: Option<String>,
    steps: Option<u64>,
) -> Result<RunConfig, AppError> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(mode) = mode {
        cfg.sim.mode = mode.parse::<Mode>().map_err(AppError::Config)?;
    }
    if let Some(steps) = steps {
        cfg.sim.trainer_steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_output_dir(flag: Option<PathBuf>) -> Result<PathBuf, AppError> {
    let dir = flag
        .or_else(|| std::env::var_os("ASYNCRL_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_run_outputs(outcome: &SimOutcome, dir: &Path, with_training: bool) -> Result<(), AppError> {
    outcome.trace.save(dir.join("trace.jsonl"))?;
    let summary = serde_json::json!({
        "completed_steps": outcome.completed_steps,
        "throughput": throughput_report(&outcome.trace),
        "off_policy_age_histogram": off_policy_age_histogram(&outcome.trace),
        "retired_prompts": outcome.curriculum.retired_count(),
    });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    if with_training {
        save_curve_csv(&outcome.curve, dir.join("curve.csv"))?;
        std::fs::write(
            dir.join("params.json"),
            serde_json::to_string_pretty(&outcome.final_params).expect("params serialize"),
        )?;
    }
    Ok(())
}

/// Minimal curve CSV reader for the report subcommand: row count plus
/// first and last mean reward.
fn curve_summary(path: &Path) -> Result<serde_json::Value, AppError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("step,mean_reward") {
        return Err(AppError::Runtime(format!(
            "{}: not a learning-curve CSV (header `{header}`)",
            path.display()
        )));
    }
    let rewards: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| AppError::Runtime(format!("{}: malformed curve row `{l}`", path.display())))
        })
        .collect::<Result<_, _>>()?;
    Ok(serde_json::json!({
        "steps": rewards.len(),
        "first_mean_reward": rewards.first(),
        "final_mean_reward": rewards.last(),
    }))
}
