//! Training and evaluation loops.

use std::fs;
use std::path::{Path, PathBuf};

use edgesched_core::domain::{seed, Request};
use edgesched_core::sim::{run_episode, EpisodeOutcome, Event, Mode, SimError, Simulation};
use edgesched_core::trace::{generate_pattern, parse_trace, Trace, TraceError};
use edgesched_nn::{CheckpointBundle, NnError};
use thiserror::Error;

use crate::config::HarnessConfig;
use crate::metrics::{
    write_curve, write_metrics, CurveRow, DelayStats, EvalSummary, MetricsRow, SUMMARY_SCHEMA,
};
use crate::scheduler::Scheduler;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("checkpoint does not match the configured networks: {0}")]
    Checkpoint(#[from] NnError),
    #[error("trace {path} has no arrivals")]
    EmptyTrace { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Where episode workloads come from.
#[derive(Clone, Debug)]
pub enum TraceSource {
    /// A fresh synthetic trace per episode.
    Pattern,
    /// Consecutive episode-length windows of a replayed trace.
    Windows(Vec<Vec<Request>>),
}

impl TraceSource {
    pub fn from_config(config: &HarnessConfig) -> Result<Self, RunError> {
        let Some(path) = &config.trace else {
            return Ok(Self::Pattern);
        };
        let requests = parse_trace(path, &config.sim)?;
        let windows = clip_windows(
            requests,
            config.sim.frame_seconds() * config.frames() as f64,
        );
        if windows.is_empty() {
            return Err(RunError::EmptyTrace { path: path.clone() });
        }
        Ok(Self::Windows(windows))
    }

    /// Workload of item `index` of seed stream `stream`.
    pub fn trace(
        &self,
        config: &HarnessConfig,
        stream: u64,
        index: usize,
    ) -> Result<Trace, RunError> {
        let frame_seconds = config.sim.frame_seconds();
        match self {
            Self::Pattern => Ok(generate_pattern(
                config.pattern,
                config.frames(),
                &config.workload,
                &config.sim,
                seed::derive_indexed(config.seed, stream, index as u64),
            )?),
            Self::Windows(w) => Ok(Trace::from_requests(
                w[index % w.len()].clone(),
                frame_seconds,
            )),
        }
    }
}

/// Cuts a trace into back-to-back windows of `length` seconds, each shifted
/// to start at zero. Windows without arrivals are dropped.
pub fn clip_windows(requests: Vec<Request>, length: f64) -> Vec<Vec<Request>> {
    let mut windows: Vec<Vec<Request>> = Vec::new();
    for mut r in requests {
        let k = (r.arrival_time / length).floor() as usize;
        r.arrival_time -= k as f64 * length;
        if windows.len() <= k {
            windows.resize_with(k + 1, Vec::new);
        }
        windows[k].push(r);
    }
    windows.retain(|w| !w.is_empty());
    windows
}

/// Whether every frame's orchestration precedes that frame's dispatches.
pub fn ordering_holds(events: &[Event]) -> bool {
    let mut orchestrated = None;
    events.iter().all(|e| match *e {
        Event::Orchestrated { frame, .. } => {
            orchestrated = Some(frame);
            true
        }
        Event::Dispatched { frame, .. } => orchestrated == Some(frame),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub struct Training {
    pub scheduler: Scheduler,
    pub curve: Vec<CurveRow>,
    pub metrics: Vec<MetricsRow>,
    /// Conservation, capacity and ordering held in every episode.
    pub invariants_held: bool,
}

impl Training {
    pub fn checkpoint(&self) -> Option<CheckpointBundle> {
        self.scheduler.checkpoint()
    }

    /// Mean of `mean_phi_f` over an episode range of the learning curve.
    pub fn mean_phi_f(&self, range: std::ops::Range<usize>) -> f64 {
        mean(self.curve[range].iter().map(|r| r.mean_phi_f)).unwrap_or(0.0)
    }
}

fn run_one(
    config: &HarnessConfig,
    scheduler: &mut Scheduler,
    trace: &Trace,
    mode: Mode,
) -> Result<EpisodeOutcome, RunError> {
    let mut sim = Simulation::new(&config.sim, trace)?;
    let (dispatch, orchestration) = scheduler.parts();
    Ok(run_episode(
        &mut sim,
        dispatch,
        orchestration,
        config.frames(),
        mode,
    )?)
}

/// Trains `config.episodes` episodes, each on its own workload.
pub fn run_training(config: &HarnessConfig) -> Result<Training, RunError> {
    let source = TraceSource::from_config(config)?;
    let mut scheduler = Scheduler::new(config);
    let run = config.scheduler.to_string();
    let mut curve = Vec::with_capacity(config.episodes);
    let mut metrics = Vec::new();
    let mut invariants_held = true;
    for episode in 0..config.episodes {
        let trace = source.trace(config, seed::TRACE, episode)?;
        let outcome = run_one(config, &mut scheduler, &trace, Mode::Training)?;
        invariants_held &= outcome.conservation_held && ordering_holds(&outcome.events);
        let dispatch = scheduler.take_dispatch_stats();
        let orchestration = scheduler.take_orchestration_stats();
        let c = &outcome.counters;
        curve.push(CurveRow {
            episode,
            mean_phi_f: outcome.mean_phi_f(),
            cost_mb: c.cost_mb(),
            image_mb: c.image_mb,
            arrivals: c.arrivals,
            timely: c.timely(),
            late: c.late,
            drops: c.dropped,
            dispatch_reward: mean(dispatch.iter().map(|s| s.reward)),
            critic_loss: mean(dispatch.iter().map(|s| s.critic_loss)),
            orchestration_return: orchestration.last().map(|s| s.episode_return),
            orchestration_baseline: orchestration.last().map(|s| s.baseline),
            orchestration_grad_norm: orchestration.last().map(|s| s.grad_norm),
        });
        metrics.extend(
            outcome
                .records
                .iter()
                .map(|r| MetricsRow::from_record(&run, episode, r)),
        );
    }
    Ok(Training {
        scheduler,
        curve,
        metrics,
        invariants_held,
    })
}

/// Evaluates `scheduler` on `sequences` held-out workloads.
pub fn run_eval(
    config: &HarnessConfig,
    scheduler: &mut Scheduler,
    sequences: usize,
) -> Result<(EvalSummary, Vec<MetricsRow>), RunError> {
    let source = TraceSource::from_config(config)?;
    let run = config.scheduler.to_string();
    let mut phi_f = Vec::with_capacity(sequences);
    let mut rows = Vec::new();
    let mut total_cost = 0.0;
    let mut max_image = 0.0f64;
    let mut dispatch_delay = Vec::new();
    let mut orchestration_delay = Vec::new();
    let mut conservation_held = true;
    for index in 0..sequences {
        let trace = source.trace(config, seed::EVAL_TRACE, index)?;
        let outcome = run_one(config, scheduler, &trace, Mode::Evaluation)?;
        conservation_held &= outcome.conservation_held && ordering_holds(&outcome.events);
        phi_f.push(outcome.mean_phi_f());
        total_cost += outcome.counters.cost_mb();
        for r in &outcome.records {
            max_image = max_image.max(r.image_mb);
            dispatch_delay.push(r.phi_d_dispatch);
            orchestration_delay.push(r.phi_d_orchestration);
        }
        rows.extend(
            outcome
                .records
                .iter()
                .map(|r| MetricsRow::from_record(&run, index, r)),
        );
    }
    let mean_phi_f = mean(phi_f.iter().copied());
    let std_phi_f = mean_phi_f
        .map(|m| (phi_f.iter().map(|v| (v - m).powi(2)).sum::<f64>() / phi_f.len() as f64).sqrt());
    let summary = EvalSummary {
        schema_version: SUMMARY_SCHEMA,
        scheduler: run,
        sequences,
        mean_phi_f,
        std_phi_f,
        total_phi_c: total_cost,
        mean_phi_c_per_sequence: (sequences > 0).then(|| total_cost / sequences as f64),
        max_image_mb_per_frame: max_image,
        phi_d_dispatch: DelayStats::of(&dispatch_delay),
        phi_d_orchestration: DelayStats::of(&orchestration_delay),
        conservation_held,
        per_sequence_phi_f: phi_f,
    };
    Ok((summary, rows))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<fs::File, RunError> {
    fs::File::create(path).map_err(io_err(path))
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CURVE_FILE: &str = "learning_curve.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVAL_METRICS_FILE: &str = "eval_metrics.csv";

/// Writes the metrics, learning curve and (for learned schedulers) the
/// checkpoint into `dir`.
pub fn write_training(dir: &Path, training: &Training) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(METRICS_FILE);
    write_metrics(create(&path)?, &training.metrics).map_err(|source| RunError::Csv {
        path: path.clone(),
        source,
    })?;
    let path = dir.join(CURVE_FILE);
    write_curve(create(&path)?, &training.curve).map_err(|source| RunError::Csv {
        path: path.clone(),
        source,
    })?;
    if let Some(bundle) = training.checkpoint() {
        let path = dir.join(CHECKPOINT_FILE);
        fs::write(&path, bundle.to_json()).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn write_eval(dir: &Path, summary: &EvalSummary, rows: &[MetricsRow]) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let path = dir.join(EVAL_METRICS_FILE);
    write_metrics(create(&path)?, rows).map_err(|source| RunError::Csv {
        path: path.clone(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointBundle, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(CheckpointBundle::from_json(&text)?)
}
