use edgesched_core::baselines::{
    autoscale_step, desired_replicas, greedy_target, random_target, AutoscalerConfig,
    GreedyDispatcher, NativeAutoscaler, RandomDispatcher,
};
use edgesched_core::cmmac::{resource_context, AvailabilityRule, ResourceContext};
use edgesched_core::domain::{
    DispatchTarget, EapId, NodeId, Request, RunningRequest, ScaleAction, ServiceId, SimConfig,
};
use edgesched_core::sim::{run_episode, Dispatcher, Mode, Orchestrator, Simulation};
use edgesched_core::trace::{generate_pattern, PatternKind, WorkloadConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn req(service: u32) -> Request {
    Request {
        id: 0,
        service: ServiceId(service),
        arrival_time: 0.0,
        deadline: 2.0,
        work: 0.3,
        admitting_eap: EapId(1),
    }
}

fn empty_sim() -> Simulation {
    let cfg = SimConfig {
        initial_replicas: 0,
        ..SimConfig::small_profile()
    };
    Simulation::from_requests(&cfg, Vec::new()).unwrap()
}

/// Gives nodes 1..=k one busy replica of service 1 with CPU and memory
/// utilization both equal to the given value.
fn with_utilizations(utils: &[f64]) -> Simulation {
    let mut sim = empty_sim();
    let state = sim.state_mut();
    let spec = state.services[0].clone();
    for (k, &u) in utils.iter().enumerate() {
        let node = &mut state.nodes[k];
        node.deployments[0] = 1;
        node.image_cache.insert(ServiceId(1));
        node.cpu_capacity = spec.cpu_per_replica / u;
        node.mem_capacity = spec.mem_per_replica / u;
        node.running.push(RunningRequest {
            request: req(1),
            remaining_work: 1.0,
        });
    }
    sim
}

fn first_nodes(k: usize, total: usize) -> ResourceContext {
    ResourceContext((0..=total).map(|a| a <= k).collect())
}

#[test]
fn greedy_picks_least_utilized() {
    let sim = with_utilizations(&[0.9, 0.1, 0.5]);
    let utils: Vec<f64> = (0..3)
        .map(|n| sim.state().nodes[n].utilization(&sim.state().services))
        .collect();
    assert!((utils[0] - 0.9).abs() < 1e-12 && (utils[1] - 0.1).abs() < 1e-12);
    assert_eq!(
        greedy_target(sim.state(), &first_nodes(3, 9)),
        DispatchTarget::Node(NodeId(2))
    );
}

#[test]
fn greedy_breaks_ties_by_lowest_id() {
    let sim = with_utilizations(&[0.6, 0.3, 0.3]);
    assert_eq!(
        greedy_target(sim.state(), &first_nodes(3, 9)),
        DispatchTarget::Node(NodeId(2))
    );
}

#[test]
fn greedy_falls_back_to_cloud() {
    let sim = with_utilizations(&[0.2]);
    assert_eq!(
        greedy_target(sim.state(), &ResourceContext::cloud_only(10)),
        DispatchTarget::Cloud
    );
}

#[test]
fn greedy_dispatcher_uses_availability_rule() {
    let cfg = SimConfig::small_profile();
    let arrival = Request {
        admitting_eap: EapId(2),
        ..req(3)
    };
    let mut sim = Simulation::from_requests(
        &SimConfig {
            initial_replicas: 0,
            ..cfg.clone()
        },
        vec![arrival],
    )
    .unwrap();
    sim.admit_arrivals();
    let mut greedy = GreedyDispatcher::new(&cfg);
    assert_eq!(greedy.decide(&sim, EapId(2)), DispatchTarget::Cloud);
    sim.apply_plan(&[(NodeId(7), ScaleAction::add(ServiceId(3)))])
        .unwrap();
    assert_eq!(
        greedy.decide(&sim, EapId(2)),
        DispatchTarget::Node(NodeId(7))
    );
}

#[test]
fn random_with_only_cloud_valid_is_cloud() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert_eq!(
            random_target(&ResourceContext::cloud_only(6), &mut rng),
            DispatchTarget::Cloud
        );
    }
}

#[test]
fn random_is_reproducible() {
    let mask = ResourceContext(vec![true, false, true, true, false, true]);
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| random_target(&mask, &mut rng))
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
    assert_ne!(draw(9), draw(10));
}

#[test]
fn random_is_uniform_over_valid_targets() {
    let mask = ResourceContext(vec![
        true, false, true, true, false, true, false, true, false, false,
    ]);
    let valid = [0usize, 2, 3, 5, 7];
    let draws = 10_000;
    let mut counts = [0u64; 10];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..draws {
        counts[random_target(&mask, &mut rng).action()] += 1;
    }
    let p = 1.0 / valid.len() as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for (a, &c) in counts.iter().enumerate() {
        if valid.contains(&a) {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "action {a}: {c}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        } else {
            assert_eq!(c, 0);
        }
    }
    // 99.9th percentile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 18.467, "chi2 {chi2}");
}

#[test]
fn desired_replica_examples() {
    let cfg = AutoscalerConfig::default();
    assert_eq!(desired_replicas(1, 0.5, &cfg), 1);
    assert_eq!(desired_replicas(1, 1.0, &cfg), 2);
    assert_eq!(desired_replicas(1, 0.0, &cfg), 1);
    assert_eq!(desired_replicas(3, 0.0, &cfg), 1);
    assert_eq!(desired_replicas(2, 0.54, &cfg), 2);
    assert_eq!(desired_replicas(2, 0.8, &cfg), 4);
    assert_eq!(desired_replicas(4, 0.2, &cfg), 2);
    assert_eq!(
        autoscale_step(ServiceId(2), 1, 2),
        ScaleAction::add(ServiceId(2))
    );
    assert_eq!(
        autoscale_step(ServiceId(2), 3, 1),
        ScaleAction::remove(ServiceId(2))
    );
    assert_eq!(autoscale_step(ServiceId(2), 2, 2), ScaleAction::NOOP);
}

#[test]
fn native_plan_moves_one_step_per_hosted_service() {
    let cfg = SimConfig::small_profile();
    let mut sim = empty_sim();
    let frame_seconds = cfg.slot_seconds * cfg.beta as f64;
    {
        let state = sim.state_mut();
        state.nodes[0].deployments[0] = 1;
        state.nodes[0].busy_seconds[0] = frame_seconds;
        state.nodes[1].deployments[1] = 3;
        state.nodes[2].deployments[2] = 2;
        state.nodes[2].busy_seconds[2] = frame_seconds;
        state.nodes[3].deployments[3] = 1;
    }
    let native = NativeAutoscaler::new(&cfg, AutoscalerConfig::default());
    assert_eq!(
        native.plan(sim.state()),
        vec![
            (NodeId(1), ScaleAction::add(ServiceId(1))),
            (NodeId(2), ScaleAction::remove(ServiceId(2))),
        ]
    );
}

/// Wraps a dispatcher and records any decision that violates the mask.
struct MaskAudit<D> {
    inner: D,
    rule: AvailabilityRule,
    violations: usize,
}

impl<D: Dispatcher> Dispatcher for MaskAudit<D> {
    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget {
        let target = self.inner.decide(sim, eap);
        let mask = resource_context(sim.state(), sim.head_of_line(eap).unwrap(), self.rule);
        if !mask.allows(target.action()) {
            self.violations += 1;
        }
        target
    }
}

fn audited_episode(
    dispatcher: impl Dispatcher,
    orchestrator: &mut dyn Orchestrator,
    seed: u64,
) -> usize {
    let cfg = SimConfig {
        episode_frames: 4,
        ..SimConfig::small_profile()
    };
    let trace =
        generate_pattern(PatternKind::P4, 4, &WorkloadConfig::default(), &cfg, seed).unwrap();
    let mut sim = Simulation::new(&cfg, &trace).unwrap();
    let mut audit = MaskAudit {
        inner: dispatcher,
        rule: AvailabilityRule::from_config(&cfg),
        violations: 0,
    };
    let out = run_episode(&mut sim, &mut audit, orchestrator, 4, Mode::Evaluation).unwrap();
    assert!(out.conservation_held);
    assert!(sim.state().capacity_invariants_hold());
    audit.violations
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn baselines_respect_validity_and_capacity(seed in any::<u64>()) {
        let cfg = SimConfig::small_profile();
        let mut native = NativeAutoscaler::new(&cfg, AutoscalerConfig::default());
        prop_assert_eq!(audited_episode(GreedyDispatcher::new(&cfg), &mut native, seed), 0);
        let mut native = NativeAutoscaler::new(&cfg, AutoscalerConfig::default());
        prop_assert_eq!(audited_episode(RandomDispatcher::new(&cfg, seed), &mut native, seed), 0);
    }
}
