use edgesched_core::domain::{
    CloudConfig, CostModel, DispatchTarget, EapId, EapSpec, NodeId, NodeSpec, Request, ScaleAction,
    ServiceId, ServiceSpec, SimConfig, Topology,
};
use edgesched_core::sim::{
    measure_scheduling_delay, run_episode, DispatchAction, Dispatcher, Mode, OrchestrationAction,
    Orchestrator, SimError, Simulation, StaticOrchestrator,
};
use edgesched_core::trace::{generate_pattern, PatternKind, WorkloadConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One eAP, one unit-speed node with zero latencies, one service.
fn tiny(replicas: usize) -> SimConfig {
    SimConfig {
        slot_seconds: 0.25,
        beta: 4,
        high_value_nodes: 1,
        gamma: 0.9,
        epsilon_lb: 1.0,
        episode_frames: 4,
        seed: 1,
        topology: Topology {
            eaps: vec![EapSpec {
                wan_latency: 0.0,
                nodes: vec![NodeSpec {
                    cpu_capacity: 1000.0,
                    mem_capacity: 1000.0,
                    storage_capacity: 1000.0,
                    speed: 1.0,
                    lan_latency: 0.0,
                    cloud_latency: 0.0,
                }],
            }],
        },
        services: vec![
            ServiceSpec {
                id: ServiceId(1),
                work_units: 1.0,
                cpu_per_replica: 100.0,
                mem_per_replica: 100.0,
                image_size: 50.0,
                storage_size: 50.0,
            },
            ServiceSpec {
                id: ServiceId(2),
                work_units: 1.0,
                cpu_per_replica: 100.0,
                mem_per_replica: 100.0,
                image_size: 120.0,
                storage_size: 120.0,
            },
        ],
        cloud: CloudConfig {
            parallelism: 4,
            speed: 1.0,
        },
        costs: CostModel {
            lan_forward_mb: 0.1,
            wan_forward_mb: 0.5,
        },
        inter_eap_latency: 0.0,
        latency_jitter: 0.0,
        queue_cap: 20,
        working_set_fraction: 1.0,
        initial_replicas: replicas,
    }
    .validate()
    .unwrap()
}

fn request(id: u64, service: u32, arrival: f64, deadline: f64, work: f64) -> Request {
    Request {
        id,
        service: ServiceId(service),
        arrival_time: arrival,
        deadline,
        work,
        admitting_eap: EapId(1),
    }
}

/// Dispatches every head-of-line request to a fixed target.
fn step_all_to(sim: &mut Simulation, target: DispatchTarget) -> edgesched_core::sim::SlotReport {
    sim.admit_arrivals();
    let actions: Vec<DispatchAction> = sim
        .state()
        .eaps
        .iter()
        .filter_map(|e| {
            e.dispatch_queue.front().map(|r| DispatchAction {
                eap: e.id,
                request: r.id,
                target,
            })
        })
        .collect();
    sim.step_slot(&actions).unwrap()
}

#[test]
fn idle_slot_only_advances_time() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let before = sim.state().clone();
    let report = sim.step_slot(&[]).unwrap();
    let mut after = sim.state().clone();
    assert_eq!(after.slot, before.slot + 1);
    after.slot = before.slot;
    assert_eq!(after, before);
    assert_eq!(report.finished(), 0);
}

#[test]
fn unit_work_finishes_after_one_second() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, vec![request(0, 1, 0.0, 2.0, 1.0)]).unwrap();
    sim.record_completions();
    let target = DispatchTarget::Node(NodeId(1));
    let mut timely = 0;
    for _ in 0..4 {
        timely += step_all_to(&mut sim, target).timely_edge;
    }
    assert_eq!(timely, 1);
    let c = &sim.completions()[0];
    assert!((c.time - 1.0).abs() < 1e-12);
    assert!(c.timely);
    assert_eq!(sim.state().episode.dropped, 0);
}

#[test]
fn short_deadline_is_dropped() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, vec![request(0, 1, 0.0, 0.5, 1.0)]).unwrap();
    let target = DispatchTarget::Node(NodeId(1));
    let mut dropped = 0;
    for _ in 0..4 {
        let r = step_all_to(&mut sim, target);
        dropped += r.dropped;
        assert_eq!(r.timely_edge, 0);
    }
    assert_eq!(dropped, 1);
    assert!(sim.state().conservation_holds());
    assert_eq!(sim.state().residual(), 0);
    assert_eq!(sim.state().node(NodeId(1)).running.len(), 0);
}

#[test]
fn frame_throughput_and_forwarding_cost() {
    // Ten arrivals at t=0; one eAP dispatches one per slot to the cloud.
    let cfg = SimConfig {
        beta: 12,
        ..tiny(1)
    };
    let reqs: Vec<Request> = (0..10).map(|i| request(i, 1, 0.0, 10.0, 0.1)).collect();
    let mut sim = Simulation::from_requests(&cfg, reqs).unwrap();
    let mut record = None;
    for _ in 0..12 {
        if let Some(r) = step_all_to(&mut sim, DispatchTarget::Cloud).frame_record {
            record = Some(r);
        }
    }
    let record = record.unwrap();
    assert_eq!(record.arrivals, 10);
    assert_eq!(record.timely_cloud, 10);
    assert_eq!(record.phi_f, 1.0);
    assert!((record.forward_mb - 10.0 * 0.5).abs() < 1e-12);
    assert!((record.phi_c - 5.0).abs() < 1e-12);
}

#[test]
fn partial_throughput_is_timely_over_arrivals() {
    // Eight requests finish in time, two have deadlines shorter than their work.
    let cfg = SimConfig {
        beta: 40,
        ..tiny(1)
    };
    let mut reqs = Vec::new();
    for i in 0..10u64 {
        let deadline = if i < 8 { 20.0 } else { 0.05 };
        reqs.push(request(i, 1, 0.0, deadline, 0.1));
    }
    let mut sim = Simulation::from_requests(&cfg, reqs).unwrap();
    let mut record = None;
    for slot in 0..40 {
        let target = if slot % 2 == 0 {
            DispatchTarget::Node(NodeId(1))
        } else {
            DispatchTarget::Cloud
        };
        if let Some(r) = step_all_to(&mut sim, target).frame_record {
            record = Some(r);
        }
    }
    let r = record.unwrap();
    let timely = r.timely_per_node.iter().sum::<u64>() + r.timely_cloud;
    assert_eq!(timely, 8);
    assert_eq!(r.drops, 2);
    assert!((r.phi_f - 8.0 / 10.0).abs() < 1e-15);
}

#[test]
fn empty_frame_scores_one() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let mut record = None;
    for _ in 0..cfg.beta {
        record = sim.step_slot(&[]).unwrap().frame_record.or(record);
    }
    assert_eq!(record.unwrap().phi_f, 1.0);
}

#[test]
fn dispatch_without_replica_requeues() {
    let cfg = tiny(0);
    let mut sim = Simulation::from_requests(&cfg, vec![request(0, 1, 0.0, 5.0, 0.1)]).unwrap();
    let r = step_all_to(&mut sim, DispatchTarget::Node(NodeId(1)));
    assert_eq!(r.rejected, 1);
    assert_eq!(r.dispatched, 0);
    assert_eq!(sim.state().eaps[0].dispatch_queue.front().unwrap().id, 0);
    assert_eq!(sim.state().episode.rejected_dispatches, 1);
}

#[test]
fn actions_must_target_head_of_line() {
    let cfg = tiny(1);
    let reqs = vec![request(0, 1, 0.0, 5.0, 0.1), request(1, 1, 0.0, 5.0, 0.1)];
    let mut sim = Simulation::from_requests(&cfg, reqs).unwrap();
    sim.admit_arrivals();
    let bad = DispatchAction {
        eap: EapId(1),
        request: 1,
        target: DispatchTarget::Cloud,
    };
    assert_eq!(
        sim.step_slot(&[bad]),
        Err(SimError::NotHeadOfLine {
            eap: EapId(1),
            request: 1
        })
    );
    let head = DispatchAction { request: 0, ..bad };
    assert_eq!(
        sim.step_slot(&[head, head]),
        Err(SimError::DuplicateEap(EapId(1)))
    );
}

#[test]
fn trace_with_unknown_service_is_rejected() {
    let cfg = tiny(1);
    let err = Simulation::from_requests(&cfg, vec![request(0, 3, 0.0, 1.0, 1.0)]).unwrap_err();
    assert_eq!(err, SimError::TraceServiceMismatch { service: 3, max: 2 });
}

#[test]
fn noop_scaling_changes_nothing() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let before = sim.state().clone();
    let out = sim
        .apply_orchestration(&OrchestrationAction {
            selected_nodes: vec![NodeId(1)],
            scalings: vec![ScaleAction::NOOP],
        })
        .unwrap();
    assert_eq!(out.image_mb, 0.0);
    assert_eq!(sim.state(), &before);
}

#[test]
fn adding_uncached_service_pulls_image() {
    let cfg = SimConfig {
        initial_replicas: 0,
        ..tiny(0)
    };
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let out = sim
        .apply_orchestration(&OrchestrationAction {
            selected_nodes: vec![NodeId(1)],
            scalings: vec![ScaleAction::add(ServiceId(2))],
        })
        .unwrap();
    assert_eq!(out.image_mb, 120.0);
    assert_eq!(sim.state().node(NodeId(1)).replicas(ServiceId(2)), 1);
    assert_eq!(sim.state().episode.cost_mb(), 120.0);
    // Second replica reuses the cached image.
    let out = sim
        .apply_plan(&[(NodeId(1), ScaleAction::add(ServiceId(2)))])
        .unwrap();
    assert_eq!(out.image_mb, 0.0);
    assert_eq!(sim.state().node(NodeId(1)).replicas(ServiceId(2)), 2);
}

#[test]
fn removing_absent_service_clamps() {
    let cfg = tiny(0);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let out = sim
        .apply_plan(&[(NodeId(1), ScaleAction::remove(ServiceId(1)))])
        .unwrap();
    assert_eq!(out.applied, vec![(NodeId(1), ScaleAction::NOOP)]);
}

#[test]
fn adding_beyond_capacity_clamps() {
    let cfg = tiny(0);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let plan = vec![(NodeId(1), ScaleAction::add(ServiceId(1))); 12];
    let out = sim.apply_plan(&plan).unwrap();
    let added = out.applied.iter().filter(|(_, a)| a.is_add()).count();
    assert_eq!(added, 10);
    assert!(sim.state().capacity_invariants_hold());
}

#[test]
fn eviction_makes_room_for_new_image() {
    let mut cfg = tiny(0);
    cfg.topology.eaps[0].nodes[0].storage_capacity = 150.0;
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    sim.apply_plan(&[(NodeId(1), ScaleAction::add(ServiceId(1)))])
        .unwrap();
    sim.apply_plan(&[(NodeId(1), ScaleAction::remove(ServiceId(1)))])
        .unwrap();
    let out = sim
        .apply_plan(&[(NodeId(1), ScaleAction::add(ServiceId(2)))])
        .unwrap();
    assert_eq!(out.image_mb, 120.0);
    let node = sim.state().node(NodeId(1));
    assert!(!node.image_cache.contains(&ServiceId(1)));
    assert!(sim.state().capacity_invariants_hold());
}

#[test]
fn busy_replica_deletion_waits_until_idle() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, vec![request(0, 1, 0.0, 5.0, 0.4)]).unwrap();
    step_all_to(&mut sim, DispatchTarget::Node(NodeId(1)));
    assert_eq!(sim.state().node(NodeId(1)).running.len(), 1);
    let out = sim
        .apply_plan(&[(NodeId(1), ScaleAction::remove(ServiceId(1)))])
        .unwrap();
    assert_eq!(out.applied[0].1, ScaleAction::remove(ServiceId(1)));
    let node = sim.state().node(NodeId(1));
    assert_eq!(
        (node.replicas(ServiceId(1)), node.pending_delete[0]),
        (1, 1)
    );
    assert_eq!(node.serving_replicas(ServiceId(1)), 0);
    let r = sim.step_slot(&[]).unwrap();
    assert_eq!(r.timely_edge, 1);
    let node = sim.state().node(NodeId(1));
    assert_eq!(
        (node.replicas(ServiceId(1)), node.pending_delete[0]),
        (0, 0)
    );
}

#[test]
fn idle_replica_deletes_immediately() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    sim.apply_plan(&[(NodeId(1), ScaleAction::remove(ServiceId(1)))])
        .unwrap();
    assert_eq!(sim.state().node(NodeId(1)).replicas(ServiceId(1)), 0);
    assert_eq!(sim.state().node(NodeId(1)).pending_delete[0], 0);
}

#[test]
fn orchestration_shape_is_checked() {
    let cfg = tiny(1);
    let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let dup = OrchestrationAction {
        selected_nodes: vec![NodeId(1), NodeId(1)],
        scalings: vec![ScaleAction::NOOP, ScaleAction::NOOP],
    };
    assert_eq!(
        sim.apply_orchestration(&dup),
        Err(SimError::DuplicateNode(NodeId(1)))
    );
    let wide = OrchestrationAction {
        selected_nodes: vec![NodeId(1)],
        scalings: vec![ScaleAction(3)],
    };
    assert_eq!(
        sim.apply_orchestration(&wide),
        Err(SimError::ScaleOutOfRange(3))
    );
}

#[test]
fn cross_eap_dispatch_costs_lan_forwarding() {
    let cfg = SimConfig::small_profile();
    let mut reqs = vec![request(0, 1, 0.0, 5.0, 0.1)];
    reqs[0].admitting_eap = EapId(2);
    let mut sim = Simulation::from_requests(&cfg, reqs).unwrap();
    let holder = sim
        .state()
        .nodes
        .iter()
        .find(|n| n.replicas(ServiceId(1)) > 0 && n.eap != EapId(2))
        .unwrap()
        .id;
    step_all_to(&mut sim, DispatchTarget::Node(holder));
    assert!((sim.state().episode.forward_mb - cfg.costs.lan_forward_mb).abs() < 1e-12);
}

#[test]
fn scheduling_delay_is_non_negative() {
    for _ in 0..10 {
        let ((), dt) = measure_scheduling_delay(|| {});
        assert!(dt >= 0.0 && dt < 0.01);
    }
}

/// Picks uniformly among the cloud and every node.
struct Uniform(ChaCha8Rng);

impl Dispatcher for Uniform {
    fn decide(&mut self, sim: &Simulation, _eap: EapId) -> DispatchTarget {
        DispatchTarget::from_action(self.0.random_range(0..=sim.state().num_nodes()))
    }
}

/// Random scaling on random nodes each frame.
struct Churn(ChaCha8Rng);

impl Orchestrator for Churn {
    fn orchestrate(&mut self, sim: &Simulation) -> Vec<(NodeId, ScaleAction)> {
        let n = sim.state().num_nodes();
        let w = sim.state().num_services() as i32;
        (0..3)
            .map(|_| {
                (
                    NodeId::from_index(self.0.random_range(0..n)),
                    ScaleAction(self.0.random_range(-w..=w)),
                )
            })
            .collect()
    }
}

fn random_run(cfg: &SimConfig, seed: u64, intensity: f64) -> Vec<String> {
    let wl = WorkloadConfig {
        intensity,
        ..WorkloadConfig::default()
    };
    let trace = generate_pattern(PatternKind::P4, cfg.episode_frames, &wl, cfg, seed).unwrap();
    let mut sim = Simulation::new(cfg, &trace).unwrap();
    let out = run_episode(
        &mut sim,
        &mut Uniform(ChaCha8Rng::seed_from_u64(seed)),
        &mut Churn(ChaCha8Rng::seed_from_u64(seed ^ 1)),
        cfg.episode_frames,
        Mode::Training,
    )
    .unwrap();
    assert!(out.conservation_held);
    out.records
        .iter()
        .map(|r| {
            assert!((0.0..=1.0).contains(&r.phi_f));
            format!(
                "{:?}",
                (r.frame, r.phi_f, r.phi_c, &r.queue_lengths, r.drops, r.late)
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conservation_and_determinism(seed in any::<u64>(), intensity in 1.0f64..20.0, jitter in 0.0f64..0.5) {
        let cfg = SimConfig {
            seed,
            latency_jitter: jitter,
            episode_frames: 3,
            ..SimConfig::small_profile()
        };
        let a = random_run(&cfg, seed, intensity);
        let b = random_run(&cfg, seed, intensity);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_replica_completes_in_deadline_order(
        deadlines in prop::collection::vec(1u32..400, 2..12),
    ) {
        // All requests reach the node at t=0; the lone replica then serves
        // them one at a time.
        let cfg = SimConfig { beta: 400, ..tiny(1) };
        let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
        sim.record_completions();
        for (i, d) in deadlines.iter().enumerate() {
            sim.state_mut().nodes[0].queue.push(edgesched_core::domain::QueuedRequest {
                request: request(i as u64, 1, 0.0, 100.0 + *d as f64 * 0.25, 0.1),
                ready_at: 0.0,
            });
        }
        sim.state_mut().nodes[0].queue.sort_by(|a, b| {
            a.request.absolute_deadline().total_cmp(&b.request.absolute_deadline())
                .then(a.request.id.cmp(&b.request.id))
        });
        sim.state_mut().episode.arrivals = deadlines.len() as u64;
        for _ in 0..20 {
            sim.step_slot(&[]).unwrap();
        }
        let order: Vec<u64> = sim.completions().iter().map(|c| c.request).collect();
        prop_assert_eq!(order.len(), deadlines.len());
        for pair in order.windows(2) {
            let (a, b) = (pair[0] as usize, pair[1] as usize);
            prop_assert!((deadlines[a], a) <= (deadlines[b], b));
        }
        prop_assert!(sim.state().conservation_holds());
    }

    #[test]
    fn scaling_preserves_capacity(
        seed in any::<u64>(),
        steps in prop::collection::vec((0usize..9, -5i32..=5), 1..60),
    ) {
        let cfg = SimConfig { seed, ..SimConfig::small_profile() };
        let mut sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
        for (n, l) in steps {
            sim.apply_plan(&[(NodeId::from_index(n), ScaleAction(l))]).unwrap();
            prop_assert!(sim.state().capacity_invariants_hold());
        }
    }
}

#[test]
fn static_orchestration_episode_runs() {
    let cfg = SimConfig::small_profile();
    let trace = generate_pattern(
        PatternKind::P1,
        cfg.episode_frames,
        &WorkloadConfig::default(),
        &cfg,
        3,
    )
    .unwrap();
    let mut sim = Simulation::new(&cfg, &trace).unwrap();
    let out = run_episode(
        &mut sim,
        &mut Uniform(ChaCha8Rng::seed_from_u64(3)),
        &mut StaticOrchestrator,
        cfg.episode_frames,
        Mode::Evaluation,
    )
    .unwrap();
    assert_eq!(out.records.len(), cfg.episode_frames);
    assert!(out.conservation_held);
    assert_eq!(
        out.counters.arrivals,
        out.counters.timely() + out.counters.late + out.counters.dropped + out.residual
    );
}
