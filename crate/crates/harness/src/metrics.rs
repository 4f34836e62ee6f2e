//! Metrics CSV, learning curve CSV and evaluation summary JSON.
//!
//! Metrics CSV (schema 1), one row per frame, preceded by a
//! `# edgesched metrics schema 1` comment line:
//! `run,episode,frame,phi_f,phi_c,frame_cost_mb,forward_mb,image_mb,arrivals,
//! timely_edge,timely_cloud,late,drops,rejected_dispatches,backlog`.
//! Wall-clock scheduling delay is left out so that repeated runs produce
//! identical files; it is reported in the evaluation summary instead.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use edgesched_core::domain::MetricsRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const METRICS_SCHEMA: u32 = 1;
pub const SUMMARY_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: String,
    pub episode: usize,
    pub frame: usize,
    pub phi_f: f64,
    pub phi_c: f64,
    pub frame_cost_mb: f64,
    pub forward_mb: f64,
    pub image_mb: f64,
    pub arrivals: u64,
    pub timely_edge: u64,
    pub timely_cloud: u64,
    pub late: u64,
    pub drops: u64,
    pub rejected_dispatches: u64,
    pub backlog: usize,
}

impl MetricsRow {
    pub fn from_record(run: &str, episode: usize, r: &MetricsRecord) -> Self {
        Self {
            run: run.to_string(),
            episode,
            frame: r.frame,
            phi_f: r.phi_f,
            phi_c: r.phi_c,
            frame_cost_mb: r.frame_cost_mb,
            forward_mb: r.forward_mb,
            image_mb: r.image_mb,
            arrivals: r.arrivals,
            timely_edge: r.timely_edge(),
            timely_cloud: r.timely_cloud,
            late: r.late,
            drops: r.drops,
            rejected_dispatches: r.rejected_dispatches,
            backlog: r.backlog(),
        }
    }

    /// Numeric columns in schema order, for long-format export.
    pub fn values(&self) -> [(&'static str, f64); 12] {
        [
            ("phi_f", self.phi_f),
            ("phi_c", self.phi_c),
            ("frame_cost_mb", self.frame_cost_mb),
            ("forward_mb", self.forward_mb),
            ("image_mb", self.image_mb),
            ("arrivals", self.arrivals as f64),
            ("timely_edge", self.timely_edge as f64),
            ("timely_cloud", self.timely_cloud as f64),
            ("late", self.late as f64),
            ("drops", self.drops as f64),
            ("rejected_dispatches", self.rejected_dispatches as f64),
            ("backlog", self.backlog as f64),
        ]
    }
}

pub fn write_metrics<W: Write>(mut out: W, rows: &[MetricsRow]) -> Result<(), csv::Error> {
    writeln!(out, "# edgesched metrics schema {METRICS_SCHEMA}")?;
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R, path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    reader
        .deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|source| MetricsError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let file = std::fs::File::open(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_metrics(file, path)
}

/// Per-episode training progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub mean_phi_f: f64,
    pub cost_mb: f64,
    pub image_mb: f64,
    pub arrivals: u64,
    pub timely: u64,
    pub late: u64,
    pub drops: u64,
    pub dispatch_reward: Option<f64>,
    pub critic_loss: Option<f64>,
    pub orchestration_return: Option<f64>,
    pub orchestration_baseline: Option<f64>,
    pub orchestration_grad_norm: Option<f64>,
}

pub fn write_curve<W: Write>(out: W, rows: &[CurveRow]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub mean_seconds: f64,
    pub max_seconds: f64,
}

impl DelayStats {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        Some(Self {
            mean_seconds: samples.iter().sum::<f64>() / samples.len() as f64,
            max_seconds: samples.iter().copied().fold(0.0, f64::max),
        })
    }
}

/// Aggregate over evaluation sequences. Statistics are absent when no
/// sequence was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub scheduler: String,
    pub sequences: usize,
    pub mean_phi_f: Option<f64>,
    pub std_phi_f: Option<f64>,
    /// Scheduling cost summed over all sequences, in MB.
    pub total_phi_c: f64,
    pub mean_phi_c_per_sequence: Option<f64>,
    pub max_image_mb_per_frame: f64,
    pub phi_d_dispatch: Option<DelayStats>,
    pub phi_d_orchestration: Option<DelayStats>,
    pub conservation_held: bool,
    pub per_sequence_phi_f: Vec<f64>,
}
