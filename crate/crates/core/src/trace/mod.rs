//! Workload traces: CSV replay and synthetic arrival patterns.

mod csv_io;
mod pattern;

use thiserror::Error;

use crate::domain::Request;

pub use csv_io::{parse_trace, parse_trace_str, write_trace_csv, TraceRow};
pub use pattern::{cpu_heavy_services, generate_pattern, PatternKind, WorkloadConfig};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: service {service} outside 1..={max}")]
    ServiceOutOfRange { line: u64, service: u32, max: usize },
    #[error("line {line}: eAP {eap} outside 1..={max}")]
    EapOutOfRange { line: u64, eap: u32, max: usize },
    #[error("line {line}: arrival time decreases")]
    NonMonotone { line: u64 },
    #[error("unknown pattern {0:?} (expected p1, p2, p3 or p4)")]
    UnknownPattern(String),
    #[error("invalid workload parameter: {0}")]
    InvalidParameter(String),
}

/// An arrival sequence together with its frame grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// Requests ordered by arrival time, ids numbered from 0.
    pub requests: Vec<Request>,
    pub frames: usize,
    pub frame_seconds: f64,
    /// Frame indices where a concatenated segment begins (excluding 0).
    pub boundaries: Vec<usize>,
}

impl Trace {
    /// Wraps a replayed request list; the frame count covers the last arrival.
    pub fn from_requests(requests: Vec<Request>, frame_seconds: f64) -> Self {
        let last = requests.last().map_or(0.0, |r| r.arrival_time);
        let frames = ((last / frame_seconds).floor() as usize + 1).max(1);
        Self {
            requests,
            frames,
            frame_seconds,
            boundaries: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.frames as f64 * self.frame_seconds
    }

    /// Sums `weight` over the arrivals of each frame.
    pub fn per_frame<F: Fn(&Request) -> f64>(&self, weight: F) -> Vec<f64> {
        let mut out = vec![0.0; self.frames];
        for r in &self.requests {
            let f = ((r.arrival_time / self.frame_seconds) as usize).min(self.frames - 1);
            out[f] += weight(r);
        }
        out
    }

    /// Segment index each frame belongs to.
    pub fn segment_of_frame(&self, frame: usize) -> usize {
        self.boundaries.iter().filter(|&&b| b <= frame).count()
    }
}

/// Joins traces end to end. Each input's timestamps are shifted by the
/// total duration of the inputs before it, ids are renumbered and the
/// starting frame of every input after the first is recorded.
pub fn concat_patterns(traces: Vec<Trace>) -> Trace {
    let frame_seconds = traces.first().map_or(1.0, |t| t.frame_seconds);
    let mut out = Trace {
        requests: Vec::new(),
        frames: 0,
        frame_seconds,
        boundaries: Vec::new(),
    };
    for (k, trace) in traces.into_iter().enumerate() {
        if k > 0 {
            out.boundaries.push(out.frames);
        }
        let offset = out.frames as f64 * frame_seconds;
        for b in &trace.boundaries {
            if !out.boundaries.contains(&(out.frames + b)) {
                out.boundaries.push(out.frames + b);
            }
        }
        for mut r in trace.requests {
            r.arrival_time += offset;
            r.id = out.requests.len() as u64;
            out.requests.push(r);
        }
        out.frames += trace.frames;
    }
    out
}
