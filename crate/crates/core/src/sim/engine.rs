use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AppliedOrchestration, DispatchAction, OrchestrationAction, SimError, SlotReport};
use crate::domain::{
    seed, throughput_rate, ClusterState, Counters, DispatchTarget, MetricsRecord, NodeId,
    QueuedRequest, Request, RunningRequest, ScaleAction, ServiceId, SimConfig,
};
use crate::trace::Trace;

const WORK_EPS: f64 = 1e-9;
const TIME_EPS: f64 = 1e-12;

/// A finished request, recorded when completion logging is on.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub request: u64,
    pub target: DispatchTarget,
    pub time: f64,
    pub timely: bool,
}

/// Owns the cluster state and replays one arrival sequence slot by slot.
#[derive(Clone, Debug)]
pub struct Simulation {
    state: ClusterState,
    config: SimConfig,
    arrivals: Vec<Request>,
    cursor: usize,
    admitted_through: Option<u64>,
    pending_report: SlotReport,
    jitter_rng: ChaCha8Rng,
    completions: Option<Vec<Completion>>,
}

impl Simulation {
    pub fn new(config: &SimConfig, trace: &Trace) -> Result<Self, SimError> {
        Self::from_requests(config, trace.requests.clone())
    }

    pub fn from_requests(config: &SimConfig, arrivals: Vec<Request>) -> Result<Self, SimError> {
        let w = config.num_services();
        let b = config.topology.num_eaps();
        for r in &arrivals {
            if r.service.0 == 0 || r.service.index() >= w {
                return Err(SimError::TraceServiceMismatch {
                    service: r.service.0,
                    max: w,
                });
            }
            if r.admitting_eap.0 == 0 || r.admitting_eap.index() >= b {
                return Err(SimError::TraceEapMismatch {
                    eap: r.admitting_eap.0,
                    max: b,
                });
            }
        }
        Ok(Self {
            state: ClusterState::from_config(config),
            config: config.clone(),
            arrivals,
            cursor: 0,
            admitted_through: None,
            pending_report: SlotReport::default(),
            jitter_rng: ChaCha8Rng::seed_from_u64(seed::derive(config.seed, seed::SIM)),
            completions: None,
        })
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    /// Direct state access for scenario setup in tests and tools.
    pub fn state_mut(&mut self) -> &mut ClusterState {
        &mut self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn record_completions(&mut self) {
        self.completions.get_or_insert_with(Vec::new);
    }

    pub fn completions(&self) -> &[Completion] {
        self.completions.as_deref().unwrap_or(&[])
    }

    /// Index of the frame the next slot belongs to.
    pub fn frame(&self) -> usize {
        (self.state.slot / self.config.beta as u64) as usize
    }

    pub fn at_frame_start(&self) -> bool {
        self.state.slot.is_multiple_of(self.config.beta as u64)
    }

    pub fn slot_start(&self) -> f64 {
        self.state.now()
    }

    pub fn slot_end(&self) -> f64 {
        (self.state.slot + 1) as f64 * self.state.slot_seconds
    }

    /// Moves every arrival that falls before the end of the current slot
    /// into its eAP queue. Repeated calls within a slot do nothing.
    pub fn admit_arrivals(&mut self) -> u64 {
        if self.admitted_through == Some(self.state.slot) {
            return 0;
        }
        self.admitted_through = Some(self.state.slot);
        if self.at_frame_start() {
            for node in &mut self.state.nodes {
                node.busy_seconds.iter_mut().for_each(|b| *b = 0.0);
            }
        }
        let end = self.slot_end();
        let mut admitted = 0;
        while self.cursor < self.arrivals.len() && self.arrivals[self.cursor].arrival_time < end {
            let r = self.arrivals[self.cursor].clone();
            self.cursor += 1;
            self.state.eaps[r.admitting_eap.index()]
                .dispatch_queue
                .push_back(r);
            admitted += 1;
        }
        self.state.frame.arrivals += admitted;
        self.state.episode.arrivals += admitted;
        self.pending_report.admitted += admitted;
        admitted
    }

    /// Head-of-line request of an eAP queue.
    pub fn head_of_line(&self, eap: crate::domain::EapId) -> Option<&Request> {
        self.state.eaps.get(eap.index())?.dispatch_queue.front()
    }

    /// Whether every arrival has been admitted and nothing remains in flight.
    pub fn drained(&self) -> bool {
        self.cursor == self.arrivals.len() && self.state.residual() == 0
    }

    /// Executes dispatch actions, serves every queue until the end of the
    /// slot, drops expired requests and advances the clock.
    pub fn step_slot(&mut self, actions: &[DispatchAction]) -> Result<SlotReport, SimError> {
        self.admit_arrivals();
        self.validate_actions(actions)?;
        for a in actions {
            self.dispatch(a);
        }
        let (start, end) = (self.slot_start(), self.slot_end());
        for n in 0..self.state.nodes.len() {
            self.serve_node(n, start, end);
        }
        self.serve_cloud(start, end);
        self.drop_expired(end);

        self.state.slot += 1;
        let mut report = std::mem::take(&mut self.pending_report);
        report.slot = self.state.slot - 1;
        if self.at_frame_start() {
            report.frame_record = Some(self.close_frame());
        }
        Ok(report)
    }

    fn validate_actions(&self, actions: &[DispatchAction]) -> Result<(), SimError> {
        let mut seen = vec![false; self.state.eaps.len()];
        for a in actions {
            let b = a.eap.index();
            if a.eap.0 == 0 || b >= seen.len() {
                return Err(SimError::UnknownEap(a.eap));
            }
            if std::mem::replace(&mut seen[b], true) {
                return Err(SimError::DuplicateEap(a.eap));
            }
            if self.state.eaps[b].dispatch_queue.front().map(|r| r.id) != Some(a.request) {
                return Err(SimError::NotHeadOfLine {
                    eap: a.eap,
                    request: a.request,
                });
            }
            if let DispatchTarget::Node(n) = a.target {
                if n.0 == 0 || n.index() >= self.state.nodes.len() {
                    return Err(SimError::TargetOutOfRange(n.0 as usize));
                }
            }
        }
        Ok(())
    }

    fn jittered(&mut self, latency: f64) -> f64 {
        let j = self.config.latency_jitter;
        if j == 0.0 {
            latency
        } else {
            latency * (1.0 + j * (2.0 * self.jitter_rng.random::<f64>() - 1.0))
        }
    }

    fn dispatch(&mut self, action: &DispatchAction) {
        let b = action.eap.index();
        let request = self.state.eaps[b]
            .dispatch_queue
            .pop_front()
            .expect("validated head of line");
        let send_time = self.slot_start().max(request.arrival_time);
        match action.target {
            DispatchTarget::Cloud => {
                let latency = self.jittered(self.state.eaps[b].wan_latency);
                let cost = self.config.costs.wan_forward_mb;
                self.state.frame.forward_mb += cost;
                self.state.episode.forward_mb += cost;
                insert_edf(
                    &mut self.state.cloud.queue,
                    QueuedRequest {
                        request,
                        ready_at: send_time + latency,
                    },
                );
            }
            DispatchTarget::Node(id) => {
                let node = &self.state.nodes[id.index()];
                if node.serving_replicas(request.service) == 0 {
                    self.state.eaps[b].dispatch_queue.push_front(request);
                    self.state.frame.rejected_dispatches += 1;
                    self.state.episode.rejected_dispatches += 1;
                    self.pending_report.rejected += 1;
                    return;
                }
                let crosses = node.eap != request.admitting_eap;
                let mut latency = node.lan_latency;
                if crosses {
                    latency += self.config.inter_eap_latency;
                    let cost = self.config.costs.lan_forward_mb;
                    self.state.frame.forward_mb += cost;
                    self.state.episode.forward_mb += cost;
                }
                let latency = self.jittered(latency);
                insert_edf(
                    &mut self.state.nodes[id.index()].queue,
                    QueuedRequest {
                        request,
                        ready_at: send_time + latency,
                    },
                );
            }
        }
        self.pending_report.dispatched += 1;
    }

    fn serve_node(&mut self, n: usize, start: f64, end: f64) {
        let node = &mut self.state.nodes[n];
        if node.queue.is_empty() && node.running.is_empty() {
            return;
        }
        let speed = node.speed;
        let target = DispatchTarget::Node(node.id);
        let crate::domain::NodeState {
            queue,
            running,
            deployments,
            pending_delete,
            busy_seconds,
            ..
        } = node;
        let mut hooks = NodePool {
            deployments,
            pending_delete,
            busy_seconds,
            finished: Vec::new(),
        };
        serve_pool(queue, running, start, end, speed, &mut hooks);
        let finished = hooks.finished;
        for (request, time) in finished {
            self.finish(request, target, time);
        }
    }

    fn serve_cloud(&mut self, start: f64, end: f64) {
        let cloud = &mut self.state.cloud;
        if cloud.queue.is_empty() && cloud.running.is_empty() {
            return;
        }
        let mut hooks = CloudPool {
            parallelism: cloud.parallelism,
            finished: Vec::new(),
        };
        serve_pool(
            &mut cloud.queue,
            &mut cloud.running,
            start,
            end,
            cloud.speed,
            &mut hooks,
        );
        let finished = hooks.finished;
        for (request, time) in finished {
            self.finish(request, DispatchTarget::Cloud, time);
        }
    }

    fn finish(&mut self, request: Request, target: DispatchTarget, time: f64) {
        let timely = time <= request.absolute_deadline() + TIME_EPS;
        if let Some(log) = &mut self.completions {
            log.push(Completion {
                request: request.id,
                target,
                time,
                timely,
            });
        }
        let s = &mut self.state;
        match (timely, target) {
            (false, _) => {
                s.frame.late += 1;
                s.episode.late += 1;
                self.pending_report.late += 1;
            }
            (true, DispatchTarget::Cloud) => {
                s.frame.timely_cloud += 1;
                s.episode.timely_cloud += 1;
                self.pending_report.timely_cloud += 1;
            }
            (true, DispatchTarget::Node(n)) => {
                s.frame.timely_edge += 1;
                s.episode.timely_edge += 1;
                s.frame_timely_per_node[n.index()] += 1;
                self.pending_report.timely_edge += 1;
            }
        }
    }

    /// Removes every request whose absolute deadline is at or before `end`.
    fn drop_expired(&mut self, end: f64) {
        let expired = |r: &Request| r.absolute_deadline() <= end + TIME_EPS;
        let mut dropped = 0u64;
        for eap in &mut self.state.eaps {
            let before = eap.dispatch_queue.len();
            eap.dispatch_queue.retain(|r| !expired(r));
            dropped += (before - eap.dispatch_queue.len()) as u64;
        }
        for node in &mut self.state.nodes {
            let before = node.queue.len();
            node.queue.retain(|q| !expired(&q.request));
            dropped += (before - node.queue.len()) as u64;
            let mut kept = Vec::with_capacity(node.running.len());
            for r in node.running.drain(..) {
                if expired(&r.request) {
                    dropped += 1;
                    let w = r.request.service.index();
                    if node.pending_delete[w] > 0 {
                        node.pending_delete[w] -= 1;
                        node.deployments[w] -= 1;
                    }
                } else {
                    kept.push(r);
                }
            }
            node.running = kept;
        }
        let cloud = &mut self.state.cloud;
        let before = cloud.queue.len() + cloud.running.len();
        cloud.queue.retain(|q| !expired(&q.request));
        cloud.running.retain(|r| !expired(&r.request));
        dropped += (before - cloud.queue.len() - cloud.running.len()) as u64;

        self.state.frame.dropped += dropped;
        self.state.episode.dropped += dropped;
        self.pending_report.dropped += dropped;
    }

    fn close_frame(&mut self) -> MetricsRecord {
        let frame = std::mem::take(&mut self.state.frame);
        let per_node = std::mem::replace(
            &mut self.state.frame_timely_per_node,
            vec![0; self.state.nodes.len()],
        );
        MetricsRecord {
            frame: self.frame() - 1,
            phi_f: throughput_rate(frame.timely(), frame.arrivals),
            phi_c: self.state.episode.cost_mb(),
            frame_cost_mb: frame.cost_mb(),
            forward_mb: frame.forward_mb,
            image_mb: frame.image_mb,
            phi_d_dispatch: 0.0,
            phi_d_orchestration: 0.0,
            arrivals: frame.arrivals,
            timely_per_node: per_node,
            timely_cloud: frame.timely_cloud,
            late: frame.late,
            drops: frame.dropped,
            rejected_dispatches: frame.rejected_dispatches,
            queue_lengths: self.state.nodes.iter().map(|n| n.backlog()).collect(),
        }
    }

    /// Counters of the frame in progress.
    pub fn frame_counters(&self) -> &Counters {
        &self.state.frame
    }

    /// Applies a validated joint orchestration action.
    pub fn apply_orchestration(
        &mut self,
        action: &OrchestrationAction,
    ) -> Result<AppliedOrchestration, SimError> {
        if action.selected_nodes.len() != action.scalings.len() {
            return Err(SimError::ShapeMismatch {
                nodes: action.selected_nodes.len(),
                scalings: action.scalings.len(),
            });
        }
        for (k, n) in action.selected_nodes.iter().enumerate() {
            if action.selected_nodes[..k].contains(n) {
                return Err(SimError::DuplicateNode(*n));
            }
        }
        self.apply_plan(&action.plan())
    }

    /// Applies scaling steps in order, clamping infeasible ones to no-ops.
    pub fn apply_plan(
        &mut self,
        plan: &[(NodeId, ScaleAction)],
    ) -> Result<AppliedOrchestration, SimError> {
        let w = self.state.num_services() as i32;
        for (n, a) in plan {
            if n.0 == 0 || n.index() >= self.state.nodes.len() {
                return Err(SimError::UnknownNode(*n));
            }
            if a.0.abs() > w {
                return Err(SimError::ScaleOutOfRange(a.0));
            }
        }
        let mut out = AppliedOrchestration::default();
        for &(n, a) in plan {
            let (applied, mb) = self.apply_scaling(n, a);
            out.applied.push((n, applied));
            out.image_mb += mb;
        }
        Ok(out)
    }

    /// One scaling step on one node. Returns the effective action and the
    /// image MB pulled.
    fn apply_scaling(&mut self, node: NodeId, action: ScaleAction) -> (ScaleAction, f64) {
        let Some(service) = action.service() else {
            return (ScaleAction::NOOP, 0.0);
        };
        let services = &self.state.services;
        let spec = &services[service.index()];
        let node = &mut self.state.nodes[node.index()];
        let w = service.index();
        if action.is_add() {
            if !node.admits(spec, services) {
                return (ScaleAction::NOOP, 0.0);
            }
            let mut pulled = 0.0;
            if !node.image_cache.contains(&service) {
                let evictable: Vec<ServiceId> = node
                    .image_cache
                    .iter()
                    .copied()
                    .filter(|s| node.deployments[s.index()] == 0)
                    .collect();
                for victim in evictable {
                    if node.storage_used(services) + spec.storage_size <= node.storage_capacity {
                        break;
                    }
                    node.image_cache.remove(&victim);
                }
                node.image_cache.insert(service);
                pulled = spec.image_size;
            }
            node.deployments[w] += 1;
            self.state.frame.image_mb += pulled;
            self.state.episode.image_mb += pulled;
            (action, pulled)
        } else {
            if node.serving_replicas(service) == 0 {
                return (ScaleAction::NOOP, 0.0);
            }
            let busy = node.running_of(service) as u32;
            if busy < node.deployments[w] {
                node.deployments[w] -= 1;
            } else {
                node.pending_delete[w] += 1;
            }
            (action, 0.0)
        }
    }
}

fn insert_edf(queue: &mut Vec<QueuedRequest>, item: QueuedRequest) {
    let key = (item.request.absolute_deadline(), item.request.id);
    let at = queue.partition_point(|q| (q.request.absolute_deadline(), q.request.id) <= key);
    queue.insert(at, item);
}

/// Replica accounting for [`serve_pool`].
trait PoolHooks {
    fn has_free_replica(&self, service: ServiceId, running: &[RunningRequest]) -> bool;
    fn on_busy(&mut self, _running: &RunningRequest, _dt: f64) {}
    fn on_finish(&mut self, running: RunningRequest, time: f64);
}

struct NodePool<'a> {
    deployments: &'a mut [u32],
    pending_delete: &'a mut [u32],
    busy_seconds: &'a mut [f64],
    finished: Vec<(Request, f64)>,
}

impl PoolHooks for NodePool<'_> {
    fn has_free_replica(&self, service: ServiceId, running: &[RunningRequest]) -> bool {
        let w = service.index();
        let busy = running
            .iter()
            .filter(|r| r.request.service == service)
            .count();
        (busy as u32) < self.deployments[w] - self.pending_delete[w]
    }

    fn on_busy(&mut self, running: &RunningRequest, dt: f64) {
        self.busy_seconds[running.request.service.index()] += dt;
    }

    /// A replica freed while a deletion is pending retires.
    fn on_finish(&mut self, running: RunningRequest, time: f64) {
        let w = running.request.service.index();
        if self.pending_delete[w] > 0 {
            self.pending_delete[w] -= 1;
            self.deployments[w] -= 1;
        }
        self.finished.push((running.request, time));
    }
}

struct CloudPool {
    parallelism: usize,
    finished: Vec<(Request, f64)>,
}

impl PoolHooks for CloudPool {
    fn has_free_replica(&self, _service: ServiceId, running: &[RunningRequest]) -> bool {
        running.len() < self.parallelism
    }

    fn on_finish(&mut self, running: RunningRequest, time: f64) {
        self.finished.push((running.request, time));
    }
}

/// Event-driven service of a replica pool over `[start, end)`. Waiting
/// requests are taken in queue (earliest-deadline) order whenever a replica
/// of their service is free; expired ones are skipped.
fn serve_pool(
    queue: &mut Vec<QueuedRequest>,
    running: &mut Vec<RunningRequest>,
    start: f64,
    end: f64,
    speed: f64,
    hooks: &mut impl PoolHooks,
) {
    let mut t = start;
    loop {
        let mut i = 0;
        while i < queue.len() {
            let q = &queue[i];
            if q.ready_at <= t + TIME_EPS
                && q.request.absolute_deadline() > t
                && hooks.has_free_replica(q.request.service, running)
            {
                let q = queue.remove(i);
                running.push(RunningRequest {
                    remaining_work: q.request.work,
                    request: q.request,
                });
            } else {
                i += 1;
            }
        }
        let mut next = end;
        for r in running.iter() {
            next = next.min(t + r.remaining_work / speed);
        }
        for q in queue.iter() {
            if q.ready_at > t + TIME_EPS {
                next = next.min(q.ready_at);
            }
        }
        let dt = (next - t).max(0.0);
        for r in running.iter_mut() {
            r.remaining_work -= dt * speed;
            hooks.on_busy(r, dt);
        }
        t = next;
        let mut k = 0;
        while k < running.len() {
            if running[k].remaining_work <= WORK_EPS {
                let r = running.remove(k);
                hooks.on_finish(r, t);
            } else {
                k += 1;
            }
        }
        if t >= end - TIME_EPS {
            break;
        }
    }
}
