//! Configuration, experiment loops, metrics files and plot-data export for
//! the `edgesched` command-line tool.

pub mod config;
pub mod export;
pub mod metrics;
pub mod runner;
pub mod scheduler;

pub use config::{
    ConfigLayer, EvalPolicy, HarnessConfig, HarnessConfigError, Profile, SchedulerSpec,
};
pub use export::{export_plot_data, read_long, write_long, LongRow};
pub use metrics::{CurveRow, EvalSummary, MetricsRow};
pub use runner::{run_eval, run_training, RunError, Training};
pub use scheduler::Scheduler;
