//! Slot-level discrete-event engine and the policy interfaces it drives.

mod driver;
mod engine;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DispatchTarget, EapId, MetricsRecord, NodeId, ScaleAction};

pub use driver::{run_episode, EpisodeOutcome, Event, Mode};
pub use engine::{Completion, Simulation};

/// Move the head-of-line request of an eAP queue to a node or the cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchAction {
    pub eap: EapId,
    pub request: u64,
    pub target: DispatchTarget,
}

/// One scaling step on each of the selected nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestrationAction {
    pub selected_nodes: Vec<NodeId>,
    pub scalings: Vec<ScaleAction>,
}

impl OrchestrationAction {
    pub fn plan(&self) -> Vec<(NodeId, ScaleAction)> {
        self.selected_nodes
            .iter()
            .copied()
            .zip(self.scalings.iter().copied())
            .collect()
    }
}

/// What an orchestration step actually did after clamping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AppliedOrchestration {
    pub applied: Vec<(NodeId, ScaleAction)>,
    pub image_mb: f64,
}

/// Outcome counts of one slot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: u64,
    pub admitted: u64,
    pub dispatched: u64,
    pub rejected: u64,
    pub timely_edge: u64,
    pub timely_cloud: u64,
    pub late: u64,
    pub dropped: u64,
    /// Present when this slot closed a frame.
    pub frame_record: Option<MetricsRecord>,
}

impl SlotReport {
    pub fn finished(&self) -> u64 {
        self.timely_edge + self.timely_cloud + self.late + self.dropped
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("more than one dispatch action for eAP {0}")]
    DuplicateEap(EapId),
    #[error("eAP {0} does not exist")]
    UnknownEap(EapId),
    #[error("request {request} is not head-of-line at eAP {eap}")]
    NotHeadOfLine { eap: EapId, request: u64 },
    #[error("dispatch target {0} is outside 0..=N")]
    TargetOutOfRange(usize),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} selected twice")]
    DuplicateNode(NodeId),
    #[error("scaling action {0} is outside -W..=W")]
    ScaleOutOfRange(i32),
    #[error("{nodes} selected nodes but {scalings} scaling actions")]
    ShapeMismatch { nodes: usize, scalings: usize },
    #[error("trace references service {service}, but only {max} are configured")]
    TraceServiceMismatch { service: u32, max: usize },
    #[error("trace references eAP {eap}, but only {max} are configured")]
    TraceEapMismatch { eap: u32, max: usize },
}

/// Request dispatch policy, one decision per non-empty eAP queue per slot.
pub trait Dispatcher {
    /// Called after arrivals are admitted and before any decision.
    fn begin_slot(&mut self, _sim: &Simulation) {}

    /// Target for the head-of-line request at `eap`.
    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget;

    fn end_slot(&mut self, _sim: &Simulation, _report: &SlotReport) {}

    fn end_episode(&mut self, _sim: &Simulation) {}

    /// Switches between exploring/learning and greedy evaluation.
    fn set_training(&mut self, _training: bool) {}
}

/// Service orchestration policy, invoked at every frame start.
pub trait Orchestrator {
    fn orchestrate(&mut self, sim: &Simulation) -> Vec<(NodeId, ScaleAction)>;

    /// Called once the frame's slots have run.
    fn end_frame(&mut self, _sim: &Simulation, _record: &MetricsRecord) {}

    fn end_episode(&mut self, _sim: &Simulation) {}

    fn set_training(&mut self, _training: bool) {}
}

/// Leaves the deployment untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct StaticOrchestrator;

impl Orchestrator for StaticOrchestrator {
    fn orchestrate(&mut self, _sim: &Simulation) -> Vec<(NodeId, ScaleAction)> {
        Vec::new()
    }
}

/// Runs `f` and returns its result with the wall-clock seconds it took.
pub fn measure_scheduling_delay<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
