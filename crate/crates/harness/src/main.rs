use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use edgesched_core::domain::seed;
use edgesched_core::trace::{generate_pattern, write_trace_csv, PatternKind};
use edgesched_harness::config::{ConfigLayer, HarnessConfig, SchedulerSpec};
use edgesched_harness::runner::{self, load_checkpoint, write_eval, write_training};
use edgesched_harness::{export_plot_data, write_long, Scheduler};

#[derive(Parser)]
#[command(
    name = "edgesched",
    version,
    about = "Edge-cloud scheduler training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scheduler and write metrics, learning curve and checkpoint.
    Train(Common),
    /// Evaluate a scheduler greedily on held-out workloads.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`; learned schedulers start fresh without one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of evaluation sequences.
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Write a synthetic request trace as CSV.
    GenTrace(Common),
    /// Convert metrics files to long format (run, episode, frame, metric, value).
    Export {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheduler: Option<SchedulerSpec>,
    #[arg(long)]
    pattern: Option<PatternKind>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Output directory (a file path for `gen-trace`).
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<HarnessConfig> {
        let file = match &self.config {
            Some(path) => ConfigLayer::load(path)?,
            None => ConfigLayer::default(),
        };
        let flags = ConfigLayer {
            seed: self.seed,
            scheduler: self.scheduler,
            pattern: self.pattern,
            episodes: self.episodes,
            frames: self.frames,
            ..ConfigLayer::default()
        };
        Ok(HarnessConfig::resolve(flags, file)?)
    }
}

fn report(held: bool) -> ExitCode {
    if held {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: a conservation, capacity or ordering invariant was violated");
        ExitCode::from(2)
    }
}

fn train(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    let training = runner::run_training(&config)?;
    write_training(&common.out, &training)?;
    let n = training.curve.len();
    if n > 0 {
        let window = n.min(20);
        println!(
            "{} episodes: mean phi_f first {window} = {:.4}, last {window} = {:.4}",
            n,
            training.mean_phi_f(0..window),
            training.mean_phi_f(n - window..n)
        );
    }
    Ok(report(training.invariants_held))
}

fn eval(common: &Common, checkpoint: Option<&Path>, sequences: Option<usize>) -> Result<ExitCode> {
    let config = common.resolve()?;
    let mut scheduler = Scheduler::new(&config);
    if let Some(path) = checkpoint {
        let bundle = load_checkpoint(path)?;
        scheduler
            .load_checkpoint(&bundle)
            .with_context(|| format!("loading {}", path.display()))?;
    }
    let sequences = sequences.unwrap_or(config.eval_sequences);
    let (summary, rows) = runner::run_eval(&config, &mut scheduler, sequences)?;
    write_eval(&common.out, &summary, &rows)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(report(summary.conservation_held))
}

fn gen_trace(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    let trace = generate_pattern(
        config.pattern,
        config.frames(),
        &config.workload,
        &config.sim,
        seed::derive(config.seed, seed::TRACE),
    )?;
    let file = std::fs::File::create(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    write_trace_csv(file, &trace.requests)?;
    println!(
        "{} requests over {} frames",
        trace.requests.len(),
        trace.frames
    );
    Ok(ExitCode::SUCCESS)
}

fn export(metrics: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let rows = export_plot_data(metrics)?;
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_long(file, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(common) => train(common),
        Command::Eval {
            common,
            checkpoint,
            sequences,
        } => eval(common, checkpoint.as_deref(), *sequences),
        Command::GenTrace(common) => gen_trace(common),
        Command::Export { metrics, out } => export(metrics, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
