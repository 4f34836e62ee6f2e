use crate::domain::{ClusterState, EapId, NodeState, QueueSummary, Request, SimConfig};

/// Shapes of the dispatch observation vectors for one topology.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub services: usize,
    pub eaps: usize,
    pub nodes: usize,
    /// Largest eAP; per-node blocks are padded to this count.
    pub max_nodes_per_eap: usize,
    pub queue_cap: usize,
}

/// Per-node block: queue length, min slack, mean slack, remaining cpu,
/// remaining memory, remaining storage.
const NODE_FEATURES: usize = 6;
const GLOBAL_FEATURES: usize = 6;
/// Seconds of slack that map to a feature value of 1.
const SLACK_SCALE: f64 = 2.0;

impl FeatureLayout {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            services: config.num_services(),
            eaps: config.topology.num_eaps(),
            nodes: config.topology.num_nodes(),
            max_nodes_per_eap: config.topology.max_nodes_per_eap(),
            queue_cap: config.queue_cap,
        }
    }

    /// Request block, eAP queue block, padded node blocks, node count and
    /// WAN latency, then the eAP one-hot.
    pub fn local_dim(&self) -> usize {
        self.services + 1 + 3 + NODE_FEATURES * self.max_nodes_per_eap + 2 + self.eaps
    }

    pub fn global_dim(&self) -> usize {
        GLOBAL_FEATURES
    }

    pub fn critic_dim(&self) -> usize {
        self.local_dim() + self.global_dim()
    }

    /// Dispatch targets: the cloud plus every node.
    pub fn actions(&self) -> usize {
        self.nodes + 1
    }
}

fn push_summary(out: &mut Vec<f64>, s: QueueSummary, cap: usize) {
    out.push(s.len as f64 / cap as f64);
    out.push(s.min_slack.max(0.0) / SLACK_SCALE);
    out.push(s.mean_slack.max(0.0) / SLACK_SCALE);
}

fn push_node(out: &mut Vec<f64>, node: &NodeState, state: &ClusterState, cap: usize) {
    push_summary(out, node.queue_summary(state.now()), cap);
    out.extend(node.remaining_fractions(&state.services));
}

/// Observation of the agent at `eap` about to dispatch `request`. With no
/// request the request block is all zeros.
pub fn local_state(
    layout: &FeatureLayout,
    state: &ClusterState,
    eap: EapId,
    request: Option<&Request>,
) -> Vec<f64> {
    let now = state.now();
    let mut out = Vec::with_capacity(layout.local_dim());
    let mut onehot = vec![0.0; layout.services];
    let mut slack = 0.0;
    if let Some(r) = request {
        onehot[r.service.index()] = 1.0;
        slack = (r.absolute_deadline() - now).max(0.0) / SLACK_SCALE;
    }
    out.extend(onehot);
    out.push(slack);
    let e = state.eap(eap);
    push_summary(&mut out, e.queue_summary(now), layout.queue_cap);
    for k in 0..layout.max_nodes_per_eap {
        match e.nodes.get(k) {
            Some(id) => push_node(&mut out, state.node(*id), state, layout.queue_cap),
            None => out.extend([0.0; NODE_FEATURES]),
        }
    }
    out.push(e.nodes.len() as f64 / layout.max_nodes_per_eap as f64);
    out.push(e.wan_latency);
    let mut eap_onehot = vec![0.0; layout.eaps];
    eap_onehot[eap.index()] = 1.0;
    out.extend(eap_onehot);
    out
}

/// Cluster-wide summary appended to the critic input: node queue mass,
/// eAP queue mass, cloud waiting and running counts, mean CPU and memory
/// utilization.
pub fn global_summary(layout: &FeatureLayout, state: &ClusterState) -> Vec<f64> {
    let n = state.nodes.len().max(1) as f64;
    let cap = layout.queue_cap as f64;
    let node_mass = state.edge_backlog() as f64 / (n * cap);
    let eap_mass = state
        .eaps
        .iter()
        .map(|e| e.dispatch_queue.len())
        .sum::<usize>() as f64
        / (state.eaps.len().max(1) as f64 * cap);
    let cloud_waiting = state.cloud.queue.len() as f64 / cap;
    let cloud_running = state.cloud.running.len() as f64 / cap;
    let cpu = state
        .nodes
        .iter()
        .map(|x| x.cpu_utilization(&state.services))
        .sum::<f64>()
        / n;
    let mem = state
        .nodes
        .iter()
        .map(|x| x.mem_utilization(&state.services))
        .sum::<f64>()
        / n;
    vec![node_mass, eap_mass, cloud_waiting, cloud_running, cpu, mem]
}

pub fn critic_input(local: &[f64], global: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(local.len() + global.len());
    v.extend_from_slice(local);
    v.extend_from_slice(global);
    v
}
