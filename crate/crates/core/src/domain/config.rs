use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ids::ServiceId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: ServiceId,
    /// Mean processing work per request, in seconds on a unit-speed replica.
    pub work_units: f64,
    /// Millicores held by one replica.
    pub cpu_per_replica: f64,
    /// MB held by one replica.
    pub mem_per_replica: f64,
    /// MB pulled from the cloud on first placement.
    pub image_size: f64,
    /// MB of disk the cached image occupies.
    pub storage_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub storage_capacity: f64,
    /// Work units per second per busy replica.
    pub speed: f64,
    /// Seconds to the owning eAP.
    pub lan_latency: f64,
    /// Seconds to the cloud.
    pub cloud_latency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EapSpec {
    pub wan_latency: f64,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub eaps: Vec<EapSpec>,
}

impl Topology {
    pub fn num_eaps(&self) -> usize {
        self.eaps.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.eaps.iter().map(|e| e.nodes.len()).sum()
    }

    pub fn max_nodes_per_eap(&self) -> usize {
        self.eaps.iter().map(|e| e.nodes.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudConfig {
    /// Concurrently served requests.
    pub parallelism: usize,
    /// Work units per second per served request.
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// MB charged when a request is forwarded to a node of another eAP.
    pub lan_forward_mb: f64,
    /// MB charged when a request is forwarded to the cloud.
    pub wan_forward_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slot_seconds: f64,
    /// Slots per frame.
    pub beta: u32,
    /// High-value nodes selected per frame (`H`).
    pub high_value_nodes: usize,
    pub gamma: f64,
    /// Load-balance weight in the dispatch reward.
    pub epsilon_lb: f64,
    /// Frames per episode (`T`).
    pub episode_frames: usize,
    pub seed: u64,
    pub topology: Topology,
    pub services: Vec<ServiceSpec>,
    pub cloud: CloudConfig,
    pub costs: CostModel,
    /// Extra LAN hop when a request crosses to another eAP's node.
    pub inter_eap_latency: f64,
    /// Uniform relative jitter applied to every link latency, in `[0, 1)`.
    pub latency_jitter: f64,
    /// Node queue length at which the node stops being a valid target.
    pub queue_cap: usize,
    /// Per-request working set, as a fraction of the service's replica memory.
    pub working_set_fraction: f64,
    /// Replicas of each service placed round-robin at episode start.
    pub initial_replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigViolation {
    pub key: String,
    pub constraint: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.constraint)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<ConfigViolation>);

impl ConfigError {
    pub fn keys(&self) -> Vec<&str> {
        self.0.iter().map(|v| v.key.as_str()).collect()
    }
}

/// Alternating CPU-heavy (odd ids) and memory-heavy (even ids) services with
/// work, footprint and image sizes spread deterministically.
pub fn synthetic_services(count: usize) -> Vec<ServiceSpec> {
    (0..count)
        .map(|i| {
            let spread = |k: usize| (i * k % count.max(1)) as f64 / count.max(1) as f64;
            let cpu_heavy = i % 2 == 0;
            let (cpu, mem) = if cpu_heavy {
                (500.0 + 200.0 * spread(7), 256.0 + 256.0 * spread(11))
            } else {
                (200.0 + 100.0 * spread(7), 768.0 + 256.0 * spread(11))
            };
            let image = 100.0 + 300.0 * spread(13);
            ServiceSpec {
                id: ServiceId::from_index(i),
                work_units: 0.2 + 0.4 * spread(17),
                cpu_per_replica: cpu,
                mem_per_replica: mem,
                image_size: image,
                storage_size: image,
            }
        })
        .collect()
}

impl SimConfig {
    /// Five eAPs with eight nodes each and thirty services.
    pub fn default_profile() -> Self {
        let eaps = (0..5)
            .map(|b| EapSpec {
                wan_latency: 0.35 + 0.025 * b as f64,
                nodes: (0..8)
                    .map(|k| NodeSpec {
                        cpu_capacity: if k % 2 == 0 { 1000.0 } else { 2000.0 },
                        mem_capacity: if k % 2 == 0 { 2048.0 } else { 4096.0 },
                        storage_capacity: 307_200.0,
                        speed: if k % 2 == 0 { 1.0 } else { 1.5 },
                        lan_latency: 0.005,
                        cloud_latency: 0.35 + 0.025 * b as f64,
                    })
                    .collect(),
            })
            .collect();
        Self {
            slot_seconds: 0.25,
            beta: 100,
            high_value_nodes: 2,
            gamma: 0.9,
            epsilon_lb: 1.0,
            episode_frames: 200,
            seed: 0,
            topology: Topology { eaps },
            services: synthetic_services(30),
            cloud: CloudConfig {
                parallelism: 1024,
                speed: 1.0,
            },
            costs: CostModel {
                lan_forward_mb: 0.1,
                wan_forward_mb: 0.5,
            },
            inter_eap_latency: 0.02,
            latency_jitter: 0.0,
            queue_cap: 20,
            working_set_fraction: 1.0,
            initial_replicas: 2,
        }
    }

    /// Three eAPs with 2, 3 and 4 nodes and five services; sized for tests.
    pub fn small_profile() -> Self {
        let eaps = [2usize, 3, 4]
            .iter()
            .enumerate()
            .map(|(b, &n)| EapSpec {
                wan_latency: 0.35 + 0.05 * b as f64,
                nodes: (0..n)
                    .map(|k| NodeSpec {
                        cpu_capacity: 1500.0,
                        mem_capacity: 3072.0,
                        storage_capacity: 2048.0,
                        speed: if k % 2 == 0 { 1.0 } else { 1.25 },
                        lan_latency: 0.005,
                        cloud_latency: 0.35 + 0.05 * b as f64,
                    })
                    .collect(),
            })
            .collect();
        Self {
            beta: 20,
            episode_frames: 10,
            topology: Topology { eaps },
            services: synthetic_services(5),
            initial_replicas: 2,
            ..Self::default_profile()
        }
    }

    pub fn num_services(&self) -> usize {
        self.services.len()
    }

    pub fn frame_seconds(&self) -> f64 {
        self.slot_seconds * self.beta as f64
    }

    pub fn slots_per_episode(&self) -> u64 {
        self.beta as u64 * self.episode_frames as u64
    }

    pub fn max_image_size(&self) -> f64 {
        self.services
            .iter()
            .map(|s| s.image_size)
            .fold(0.0, f64::max)
    }

    /// Returns the config unchanged if every invariant holds, otherwise all
    /// violations at once.
    pub fn validate(self) -> Result<Self, ConfigError> {
        let mut v = Vec::new();
        let mut bad = |key: String, constraint: &str| {
            v.push(ConfigViolation {
                key,
                constraint: constraint.to_string(),
            })
        };
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;

        if !positive(self.slot_seconds) {
            bad("slot_seconds".into(), "must be > 0");
        }
        if self.beta == 0 {
            bad("beta".into(), "must be >= 1");
        }
        let n = self.topology.num_nodes();
        if self.high_value_nodes == 0 {
            bad("high_value_nodes".into(), "H must be >= 1");
        } else if self.high_value_nodes > n {
            bad("high_value_nodes".into(), "H must be <= N");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bad("gamma".into(), "must lie in (0, 1]");
        }
        if !non_negative(self.epsilon_lb) {
            bad("epsilon_lb".into(), "must be >= 0");
        }
        if self.episode_frames == 0 {
            bad("episode_frames".into(), "must be >= 1");
        }
        if self.topology.eaps.is_empty() {
            bad("topology".into(), "needs at least one eAP");
        }
        for (b, eap) in self.topology.eaps.iter().enumerate() {
            if !non_negative(eap.wan_latency) {
                bad(format!("topology.eaps[{b}].wan_latency"), "must be >= 0");
            }
            if eap.nodes.is_empty() {
                bad(
                    format!("topology.eaps[{b}].nodes"),
                    "needs at least one node",
                );
            }
            for (k, node) in eap.nodes.iter().enumerate() {
                let key = |f: &str| format!("topology.eaps[{b}].nodes[{k}].{f}");
                for (name, val) in [
                    ("cpu_capacity", node.cpu_capacity),
                    ("mem_capacity", node.mem_capacity),
                    ("storage_capacity", node.storage_capacity),
                    ("speed", node.speed),
                ] {
                    if !positive(val) {
                        bad(key(name), "must be > 0");
                    }
                }
                if !non_negative(node.lan_latency) {
                    bad(key("lan_latency"), "must be >= 0");
                }
                if !non_negative(node.cloud_latency) {
                    bad(key("cloud_latency"), "must be >= 0");
                }
            }
        }
        if self.services.is_empty() {
            bad("services".into(), "needs at least one service");
        }
        for (i, s) in self.services.iter().enumerate() {
            if s.id.0 as usize != i + 1 {
                bad(
                    format!("services[{i}].id"),
                    "ids must be unique and contiguous from 1",
                );
            }
            for (name, val) in [
                ("work_units", s.work_units),
                ("cpu_per_replica", s.cpu_per_replica),
                ("mem_per_replica", s.mem_per_replica),
                ("image_size", s.image_size),
                ("storage_size", s.storage_size),
            ] {
                if !positive(val) {
                    bad(format!("services[{i}].{name}"), "must be > 0");
                }
            }
        }
        if self.cloud.parallelism < n {
            bad("cloud.parallelism".into(), "must be >= N");
        }
        if !positive(self.cloud.speed) {
            bad("cloud.speed".into(), "must be > 0");
        }
        if !non_negative(self.costs.lan_forward_mb) {
            bad("costs.lan_forward_mb".into(), "must be >= 0");
        }
        if !non_negative(self.costs.wan_forward_mb) {
            bad("costs.wan_forward_mb".into(), "must be >= 0");
        }
        if !non_negative(self.inter_eap_latency) {
            bad("inter_eap_latency".into(), "must be >= 0");
        }
        if !(self.latency_jitter.is_finite() && (0.0..1.0).contains(&self.latency_jitter)) {
            bad("latency_jitter".into(), "must lie in [0, 1)");
        }
        if self.queue_cap == 0 {
            bad("queue_cap".into(), "must be >= 1");
        }
        if !non_negative(self.working_set_fraction) {
            bad("working_set_fraction".into(), "must be >= 0");
        }
        if v.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError(v))
        }
    }
}
