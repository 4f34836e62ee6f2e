//! Non-learning reference schedulers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmmac::{resource_context, AvailabilityRule, ResourceContext};
use crate::domain::{
    ClusterState, DispatchTarget, EapId, NodeId, ScaleAction, ServiceId, SimConfig,
};
use crate::sim::{Dispatcher, Orchestrator, Simulation};

fn head_context(sim: &Simulation, eap: EapId, rule: AvailabilityRule) -> Option<ResourceContext> {
    let request = sim.head_of_line(eap)?;
    Some(resource_context(sim.state(), request, rule))
}

/// Valid node with the lowest mean of CPU and memory utilization, lowest id
/// on ties, or the cloud when no node is valid.
pub fn greedy_target(state: &ClusterState, mask: &ResourceContext) -> DispatchTarget {
    let mut best: Option<(usize, f64)> = None;
    for action in 1..mask.len() {
        if !mask.allows(action) {
            continue;
        }
        let util = state.nodes[action - 1].utilization(&state.services);
        if best.is_none_or(|(_, u)| util < u) {
            best = Some((action, util));
        }
    }
    best.map_or(DispatchTarget::Cloud, |(a, _)| {
        DispatchTarget::from_action(a)
    })
}

/// Sends each request to the least utilized valid node.
#[derive(Clone, Debug)]
pub struct GreedyDispatcher {
    rule: AvailabilityRule,
}

impl GreedyDispatcher {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            rule: AvailabilityRule::from_config(config),
        }
    }
}

impl Dispatcher for GreedyDispatcher {
    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget {
        match head_context(sim, eap, self.rule) {
            Some(mask) => greedy_target(sim.state(), &mask),
            None => DispatchTarget::Cloud,
        }
    }
}

/// Uniform choice among the valid targets, cloud included.
pub fn random_target<R: Rng + ?Sized>(mask: &ResourceContext, rng: &mut R) -> DispatchTarget {
    let valid: Vec<usize> = (0..mask.len()).filter(|&a| mask.allows(a)).collect();
    DispatchTarget::from_action(valid[rng.random_range(0..valid.len())])
}

#[derive(Clone, Debug)]
pub struct RandomDispatcher {
    rule: AvailabilityRule,
    rng: ChaCha8Rng,
}

impl RandomDispatcher {
    pub fn new(config: &SimConfig, seed: u64) -> Self {
        Self {
            rule: AvailabilityRule::from_config(config),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Dispatcher for RandomDispatcher {
    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget {
        match head_context(sim, eap, self.rule) {
            Some(mask) => random_target(&mask, &mut self.rng),
            None => DispatchTarget::Cloud,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoscalerConfig {
    pub target_utilization: f64,
    /// Relative deviation from the target below which nothing changes.
    pub tolerance: f64,
    pub min_replicas: u32,
}

impl Default for AutoscalerConfig {
    fn default() -> Self {
        Self {
            target_utilization: 0.5,
            tolerance: 0.1,
            min_replicas: 1,
        }
    }
}

/// Replica count the autoscaler aims for given the observed utilization.
pub fn desired_replicas(current: u32, utilization: f64, config: &AutoscalerConfig) -> u32 {
    if current == 0 {
        return 0;
    }
    let ratio = utilization / config.target_utilization;
    if (ratio - 1.0).abs() <= config.tolerance {
        return current;
    }
    let desired = (current as f64 * ratio - 1e-9).ceil().max(0.0) as u32;
    desired.max(config.min_replicas)
}

/// One step toward `desired`: add, remove or leave alone.
pub fn autoscale_step(service: ServiceId, current: u32, desired: u32) -> ScaleAction {
    match desired.cmp(&current) {
        std::cmp::Ordering::Greater => ScaleAction::add(service),
        std::cmp::Ordering::Less => ScaleAction::remove(service),
        std::cmp::Ordering::Equal => ScaleAction::NOOP,
    }
}

/// Per-node horizontal autoscaler driven by the previous frame's busy time.
#[derive(Clone, Debug)]
pub struct NativeAutoscaler {
    config: AutoscalerConfig,
    frame_seconds: f64,
}

impl NativeAutoscaler {
    pub fn new(sim: &SimConfig, config: AutoscalerConfig) -> Self {
        Self {
            config,
            frame_seconds: sim.slot_seconds * sim.beta as f64,
        }
    }

    /// Scaling steps for every (node, hosted service) pair.
    pub fn plan(&self, state: &ClusterState) -> Vec<(NodeId, ScaleAction)> {
        let mut plan = Vec::new();
        for node in &state.nodes {
            for (w, &replicas) in node.deployments.iter().enumerate() {
                if replicas == 0 {
                    continue;
                }
                let utilization = node.busy_seconds[w] / (replicas as f64 * self.frame_seconds);
                let desired = desired_replicas(replicas, utilization, &self.config);
                let service = ServiceId::from_index(w);
                let step = autoscale_step(service, node.serving_replicas(service), desired);
                if step != ScaleAction::NOOP {
                    plan.push((node.id, step));
                }
            }
        }
        plan
    }
}

impl Orchestrator for NativeAutoscaler {
    fn orchestrate(&mut self, sim: &Simulation) -> Vec<(NodeId, ScaleAction)> {
        self.plan(sim.state())
    }
}
