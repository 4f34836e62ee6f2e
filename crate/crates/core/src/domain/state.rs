use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::{ServiceSpec, SimConfig};
use super::ids::{EapId, NodeId, ServiceId};

/// One service invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub service: ServiceId,
    /// Simulated seconds at which the request reaches its eAP.
    pub arrival_time: f64,
    /// Allowed end-to-end delay in seconds.
    pub deadline: f64,
    pub work: f64,
    pub admitting_eap: EapId,
}

impl Request {
    pub fn absolute_deadline(&self) -> f64 {
        self.arrival_time + self.deadline
    }
}

/// A request waiting in a node or cloud queue. It cannot start before
/// `ready_at` (transfer latency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueuedRequest {
    pub request: Request,
    pub ready_at: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningRequest {
    pub request: Request,
    pub remaining_work: f64,
}

/// Length plus minimum and mean slack (seconds to deadline) of a queue.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QueueSummary {
    pub len: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
}

impl QueueSummary {
    pub fn of<'a>(deadlines: impl Iterator<Item = f64> + 'a, now: f64) -> Self {
        let mut len = 0;
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        for d in deadlines {
            let slack = d - now;
            len += 1;
            min = min.min(slack);
            sum += slack;
        }
        if len == 0 {
            QueueSummary::default()
        } else {
            QueueSummary {
                len,
                min_slack: min,
                mean_slack: sum / len as f64,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub eap: EapId,
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub storage_capacity: f64,
    pub speed: f64,
    pub lan_latency: f64,
    pub cloud_latency: f64,
    /// Waiting requests in earliest-deadline-first order.
    pub queue: Vec<QueuedRequest>,
    pub running: Vec<RunningRequest>,
    /// Replica count per service (index `w - 1`).
    pub deployments: Vec<u32>,
    /// Replicas marked for deletion that are still serving.
    pub pending_delete: Vec<u32>,
    pub image_cache: BTreeSet<ServiceId>,
    /// Busy replica-seconds per service within the current frame.
    pub busy_seconds: Vec<f64>,
}

impl NodeState {
    pub fn replicas(&self, service: ServiceId) -> u32 {
        self.deployments[service.index()]
    }

    /// Replicas that will accept new work.
    pub fn serving_replicas(&self, service: ServiceId) -> u32 {
        self.deployments[service.index()] - self.pending_delete[service.index()]
    }

    pub fn running_of(&self, service: ServiceId) -> usize {
        self.running
            .iter()
            .filter(|r| r.request.service == service)
            .count()
    }

    pub fn cpu_allocated(&self, services: &[ServiceSpec]) -> f64 {
        services
            .iter()
            .zip(&self.deployments)
            .map(|(s, &d)| s.cpu_per_replica * d as f64)
            .sum()
    }

    pub fn mem_allocated(&self, services: &[ServiceSpec]) -> f64 {
        services
            .iter()
            .zip(&self.deployments)
            .map(|(s, &d)| s.mem_per_replica * d as f64)
            .sum()
    }

    pub fn storage_used(&self, services: &[ServiceSpec]) -> f64 {
        self.image_cache
            .iter()
            .map(|w| services[w.index()].storage_size)
            .sum()
    }

    pub fn free_memory(&self, services: &[ServiceSpec]) -> f64 {
        self.mem_capacity - self.mem_allocated(services)
    }

    /// Fraction of CPU consumed by replicas that are currently serving.
    pub fn cpu_utilization(&self, services: &[ServiceSpec]) -> f64 {
        let busy: f64 = self
            .running
            .iter()
            .map(|r| services[r.request.service.index()].cpu_per_replica)
            .sum();
        (busy / self.cpu_capacity).clamp(0.0, 1.0)
    }

    /// Fraction of memory held by deployed replicas.
    pub fn mem_utilization(&self, services: &[ServiceSpec]) -> f64 {
        (self.mem_allocated(services) / self.mem_capacity).clamp(0.0, 1.0)
    }

    /// Mean of CPU and memory utilization.
    pub fn utilization(&self, services: &[ServiceSpec]) -> f64 {
        0.5 * (self.cpu_utilization(services) + self.mem_utilization(services))
    }

    /// Remaining (unallocated) CPU, memory and storage fractions.
    pub fn remaining_fractions(&self, services: &[ServiceSpec]) -> [f64; 3] {
        [
            (1.0 - self.cpu_allocated(services) / self.cpu_capacity).clamp(0.0, 1.0),
            (1.0 - self.mem_allocated(services) / self.mem_capacity).clamp(0.0, 1.0),
            (1.0 - self.storage_used(services) / self.storage_capacity).clamp(0.0, 1.0),
        ]
    }

    /// Waiting requests, including those still in transit.
    pub fn backlog(&self) -> usize {
        self.queue.len()
    }

    pub fn queue_summary(&self, now: f64) -> QueueSummary {
        QueueSummary::of(
            self.queue.iter().map(|q| q.request.absolute_deadline()),
            now,
        )
    }

    /// Whether one more replica of `service` fits, counting an image pull
    /// if the image is not cached. Unused cached images may be evicted.
    pub fn admits(&self, service: &ServiceSpec, services: &[ServiceSpec]) -> bool {
        let eps = 1e-9;
        if self.cpu_allocated(services) + service.cpu_per_replica > self.cpu_capacity + eps {
            return false;
        }
        if self.mem_allocated(services) + service.mem_per_replica > self.mem_capacity + eps {
            return false;
        }
        if self.image_cache.contains(&service.id) {
            return true;
        }
        let pinned: f64 = self
            .image_cache
            .iter()
            .filter(|w| self.deployments[w.index()] > 0)
            .map(|w| services[w.index()].storage_size)
            .sum();
        pinned + service.storage_size <= self.storage_capacity + eps
    }

    pub fn satisfies_capacity(&self, services: &[ServiceSpec]) -> bool {
        let eps = 1e-6;
        self.cpu_allocated(services) <= self.cpu_capacity + eps
            && self.mem_allocated(services) <= self.mem_capacity + eps
            && self.storage_used(services) <= self.storage_capacity + eps
            && self
                .deployments
                .iter()
                .zip(&self.pending_delete)
                .all(|(&d, &p)| p <= d)
            && self
                .deployments
                .iter()
                .enumerate()
                .all(|(i, &d)| d == 0 || self.image_cache.contains(&ServiceId::from_index(i)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EapState {
    pub id: EapId,
    pub nodes: Vec<NodeId>,
    /// Requests awaiting dispatch, FIFO by arrival.
    pub dispatch_queue: VecDeque<Request>,
    pub wan_latency: f64,
}

impl EapState {
    pub fn queue_summary(&self, now: f64) -> QueueSummary {
        QueueSummary::of(
            self.dispatch_queue.iter().map(Request::absolute_deadline),
            now,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudState {
    pub queue: Vec<QueuedRequest>,
    pub running: Vec<RunningRequest>,
    pub parallelism: usize,
    pub speed: f64,
}

impl CloudState {
    pub fn queue_summary(&self, now: f64) -> QueueSummary {
        QueueSummary::of(
            self.queue.iter().map(|q| q.request.absolute_deadline()),
            now,
        )
    }
}

/// Request outcome counters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub arrivals: u64,
    pub timely_edge: u64,
    pub timely_cloud: u64,
    pub late: u64,
    pub dropped: u64,
    pub rejected_dispatches: u64,
    pub forward_mb: f64,
    pub image_mb: f64,
}

impl Counters {
    pub fn timely(&self) -> u64 {
        self.timely_edge + self.timely_cloud
    }

    pub fn cost_mb(&self) -> f64 {
        self.forward_mb + self.image_mb
    }
}

/// Full system snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub services: Vec<ServiceSpec>,
    pub eaps: Vec<EapState>,
    pub nodes: Vec<NodeState>,
    pub cloud: CloudState,
    /// Index of the next slot to execute.
    pub slot: u64,
    pub slot_seconds: f64,
    pub beta: u32,
    pub episode: Counters,
    pub frame: Counters,
    /// Timely completions per node within the current frame.
    pub frame_timely_per_node: Vec<u64>,
}

impl ClusterState {
    /// Builds the topology and places `initial_replicas` of every service
    /// round-robin over the nodes. Initial images are pre-seeded at no cost.
    pub fn from_config(config: &SimConfig) -> Self {
        let w = config.services.len();
        let mut nodes = Vec::new();
        let mut eaps = Vec::new();
        for (b, eap) in config.topology.eaps.iter().enumerate() {
            let eap_id = EapId::from_index(b);
            let mut members = Vec::new();
            for spec in &eap.nodes {
                let id = NodeId::from_index(nodes.len());
                members.push(id);
                nodes.push(NodeState {
                    id,
                    eap: eap_id,
                    cpu_capacity: spec.cpu_capacity,
                    mem_capacity: spec.mem_capacity,
                    storage_capacity: spec.storage_capacity,
                    speed: spec.speed,
                    lan_latency: spec.lan_latency,
                    cloud_latency: spec.cloud_latency,
                    queue: Vec::new(),
                    running: Vec::new(),
                    deployments: vec![0; w],
                    pending_delete: vec![0; w],
                    image_cache: BTreeSet::new(),
                    busy_seconds: vec![0.0; w],
                });
            }
            eaps.push(EapState {
                id: eap_id,
                nodes: members,
                dispatch_queue: VecDeque::new(),
                wan_latency: eap.wan_latency,
            });
        }
        let node_count = nodes.len();
        let mut state = Self {
            services: config.services.clone(),
            eaps,
            nodes,
            cloud: CloudState {
                queue: Vec::new(),
                running: Vec::new(),
                parallelism: config.cloud.parallelism,
                speed: config.cloud.speed,
            },
            slot: 0,
            slot_seconds: config.slot_seconds,
            beta: config.beta,
            episode: Counters::default(),
            frame: Counters::default(),
            frame_timely_per_node: vec![0; node_count],
        };
        let mut cursor = 0;
        for _ in 0..config.initial_replicas {
            for s in 0..w {
                for probe in 0..node_count {
                    let n = (cursor + probe) % node_count;
                    let spec = &state.services[s];
                    if state.nodes[n].admits(spec, &state.services) {
                        let id = spec.id;
                        state.nodes[n].deployments[s] += 1;
                        state.nodes[n].image_cache.insert(id);
                        cursor = n + 1;
                        break;
                    }
                }
            }
        }
        state
    }

    pub fn now(&self) -> f64 {
        self.slot as f64 * self.slot_seconds
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_services(&self) -> usize {
        self.services.len()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn eap(&self, id: EapId) -> &EapState {
        &self.eaps[id.index()]
    }

    pub fn service(&self, id: ServiceId) -> &ServiceSpec {
        &self.services[id.index()]
    }

    /// Sum of waiting requests over all edge nodes.
    pub fn edge_backlog(&self) -> usize {
        self.nodes.iter().map(NodeState::backlog).sum()
    }

    /// Requests anywhere in the system that have not finished.
    pub fn residual(&self) -> u64 {
        let eap: usize = self.eaps.iter().map(|e| e.dispatch_queue.len()).sum();
        let node: usize = self
            .nodes
            .iter()
            .map(|n| n.queue.len() + n.running.len())
            .sum();
        (eap + node + self.cloud.queue.len() + self.cloud.running.len()) as u64
    }

    /// Standard deviation of the pooled per-node CPU and memory utilization
    /// fractions.
    pub fn utilization_std(&self) -> f64 {
        let values: Vec<f64> = self
            .nodes
            .iter()
            .flat_map(|n| {
                [
                    n.cpu_utilization(&self.services),
                    n.mem_utilization(&self.services),
                ]
            })
            .collect();
        if values.is_empty() {
            return 0.0;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
    }

    pub fn capacity_invariants_hold(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.satisfies_capacity(&self.services))
    }

    /// Episode-level conservation: arrivals = timely + late + dropped + residual.
    pub fn conservation_holds(&self) -> bool {
        let c = &self.episode;
        c.arrivals == c.timely() + c.late + c.dropped + self.residual()
    }
}
