//! Core data types shared by the simulator, the schedulers and the harness.

mod config;
mod ids;
mod metrics;
pub mod seed;
mod state;

pub use config::{
    synthetic_services, CloudConfig, ConfigError, ConfigViolation, CostModel, EapSpec, NodeSpec,
    ServiceSpec, SimConfig, Topology,
};
pub use ids::{DispatchTarget, EapId, NodeId, ScaleAction, ServiceId};
pub use metrics::{throughput_rate, MetricsRecord};
pub use state::{
    CloudState, ClusterState, Counters, EapState, NodeState, QueueSummary, QueuedRequest, Request,
    RunningRequest,
};

/// Checks every configuration invariant, reporting all violations at once.
pub fn validate_config(config: SimConfig) -> Result<SimConfig, ConfigError> {
    config.validate()
}
