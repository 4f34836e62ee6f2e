use serde::{Deserialize, Serialize};

/// Per-frame measurements.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub frame: usize,
    /// Timely completions in the frame over arrivals in the frame.
    pub phi_f: f64,
    /// Cumulative scheduling cost (MB) since the episode started.
    pub phi_c: f64,
    /// Cost incurred during this frame.
    pub frame_cost_mb: f64,
    pub forward_mb: f64,
    pub image_mb: f64,
    /// Wall-clock seconds spent in dispatch decisions during the frame.
    pub phi_d_dispatch: f64,
    /// Wall-clock seconds spent computing the frame's orchestration.
    pub phi_d_orchestration: f64,
    pub arrivals: u64,
    pub timely_per_node: Vec<u64>,
    pub timely_cloud: u64,
    pub late: u64,
    pub drops: u64,
    pub rejected_dispatches: u64,
    /// Waiting requests per node at the frame boundary.
    pub queue_lengths: Vec<usize>,
}

impl MetricsRecord {
    pub fn timely_edge(&self) -> u64 {
        self.timely_per_node.iter().sum()
    }

    pub fn timely(&self) -> u64 {
        self.timely_edge() + self.timely_cloud
    }

    pub fn backlog(&self) -> usize {
        self.queue_lengths.iter().sum()
    }
}

/// Throughput rate of one frame. A frame without arrivals has nothing to
/// miss and scores 1. Completions of requests that arrived in an earlier
/// frame can push the raw ratio above 1; it is capped there.
pub fn throughput_rate(timely: u64, arrivals: u64) -> f64 {
    if arrivals == 0 {
        1.0
    } else {
        (timely as f64 / arrivals as f64).min(1.0)
    }
}
