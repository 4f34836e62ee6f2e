use edgesched_core::domain::{ScaleAction, SimConfig};
use edgesched_core::gpg::{
    attribute_dim, embed_eaps_and_cluster, embed_nodes, encode, gpg_update, log_prob,
    log_prob_and_grad, node_attributes, orchestration_reward, sample_without_replacement,
    selection_log_prob, top_k, GpgAgent, GpgConfig, GpgDecision, GpgNets, GpgShape, GraphInput,
    RunningBaseline,
};
use edgesched_core::sim::{run_episode, Mode, Simulation};
use edgesched_core::trace::{generate_pattern, PatternKind, WorkloadConfig};
use edgesched_nn::{Adam, AdamConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_shape() -> GpgShape {
    GpgShape {
        message_dim: 4,
        message_hidden: vec![5],
        update_hidden: vec![5],
        head_hidden: vec![6, 5],
    }
}

/// W=2, three nodes split over two eAPs.
fn toy(seed: u64) -> (GpgNets, GraphInput, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = attribute_dim(2);
    let mut nets = GpgNets::new(d, 5, &toy_shape(), &mut rng).unwrap();
    for (_, net) in nets.named_mut() {
        for p in net.params_mut().iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
    }
    let attrs = (0..3)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let input = GraphInput {
        attrs,
        eap_nodes: vec![vec![0, 1], vec![2]],
    };
    (nets, input, rng)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[test]
fn node_pass_matches_straight_line_replay() {
    let (nets, _, mut rng) = toy(1);
    let d = nets.attr_dim;
    let raw: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let input = GraphInput {
        attrs: raw.clone(),
        eap_nodes: vec![vec![0, 1, 2]],
    };
    let (f, h) = (&nets.message[0], &nets.update[0]);
    let msg = |v: &Vec<f64>| f.predict(v).unwrap();
    let x0 = add(
        &h.predict(&add(&msg(&raw[1]), &msg(&raw[2]))).unwrap(),
        &raw[0],
    );
    let x1 = add(&h.predict(&add(&msg(&x0), &msg(&raw[2]))).unwrap(), &raw[1]);
    let x2 = add(&h.predict(&add(&msg(&x0), &msg(&x1))).unwrap(), &raw[2]);
    let x = embed_nodes(&nets, &input).unwrap();
    for (got, want) in x.iter().zip([x0, x1, x2]) {
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn lone_node_gets_update_of_zero_message() {
    let (nets, input, _) = toy(2);
    let x = embed_nodes(&nets, &input).unwrap();
    let h0 = nets.update[0].predict(&vec![0.0; 4]).unwrap();
    assert_eq!(x[2], add(&h0, &input.attrs[2]));
}

#[test]
fn zero_messages_leave_only_update_bias() {
    let (mut nets, input, _) = toy(3);
    nets.message[0].zero_output_layer();
    let h0 = nets.update[0].predict(&vec![0.0; 4]).unwrap();
    let x = embed_nodes(&nets, &input).unwrap();
    for (n, xn) in x.iter().enumerate() {
        assert_eq!(xn, &add(&h0, &input.attrs[n]));
    }
    nets.message[1].zero_output_layer();
    let (y, _) = embed_eaps_and_cluster(&nets, &x, &[vec![0]]).unwrap();
    assert_eq!(y[0], nets.update[1].predict(&vec![0.0; 4]).unwrap());
}

#[test]
fn zero_output_encoder_passes_attributes_through() {
    let (mut nets, input, _) = toy(4);
    for net in nets.message.iter_mut().chain(nets.update.iter_mut()) {
        net.zero_output_layer();
    }
    let (emb, _) = encode(&nets, &input).unwrap();
    assert_eq!(emb.x, input.attrs);
    assert!(emb.y.iter().flatten().all(|&v| v == 0.0));
    assert!(emb.z.iter().all(|&v| v == 0.0));
}

#[test]
fn aggregation_ignores_child_order() {
    let (nets, _, mut rng) = toy(5);
    let d = nets.attr_dim;
    let x: Vec<Vec<f64>> = (0..7)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let groups = vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]];
    let (y, z) = embed_eaps_and_cluster(&nets, &x, &groups).unwrap();
    for _ in 0..100 {
        let mut shuffled = groups.clone();
        shuffled.iter_mut().for_each(|g| g.shuffle(&mut rng));
        let mut order: Vec<usize> = (0..3).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<Vec<usize>> = order.iter().map(|&b| shuffled[b].clone()).collect();
        let (y2, z2) = embed_eaps_and_cluster(&nets, &x, &permuted).unwrap();
        for (k, &b) in order.iter().enumerate() {
            for (a, c) in y2[k].iter().zip(&y[b]) {
                assert!((a - c).abs() < 1e-12);
            }
        }
        for (a, c) in z2.iter().zip(&z) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}

#[test]
fn selection_examples() {
    let p: Vec<f64> = (0..3)
        .map(|i| selection_log_prob(&[2.0, 1.0, 0.0], &[i]).exp())
        .collect();
    assert!((p[0] - 0.665).abs() < 1e-3);
    assert!((p[1] - 0.245).abs() < 1e-3);
    assert!((p[2] - 0.090).abs() < 1e-3);
    assert_eq!(top_k(&[0.5; 5], 2), vec![0, 1]);
    let mut all = top_k(&[0.3, 0.1, 0.9], 3);
    all.sort();
    assert_eq!(all, vec![0, 1, 2]);
    let p = selection_log_prob(&[1.0; 4], &[2]).exp();
    assert!((p - 0.25).abs() < 1e-15);
}

#[test]
fn scaling_action_space_and_uniform_scores() {
    let (mut nets, input, _) = toy(6);
    assert_eq!(nets.scale_actions, 5);
    nets.scale_value.zero_output_layer();
    let (emb, _) = encode(&nets, &input).unwrap();
    let (q, _) = edgesched_core::gpg::scale_scores(&nets, &input, &emb, 0).unwrap();
    let p = edgesched_nn::softmax(&q).unwrap();
    assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    assert_eq!(ScaleAction::from_index(1, 1), ScaleAction::NOOP);
    assert_eq!(edgesched_core::cmmac::argmax(&[0.0, 4.0, 0.0]), 1);
}

#[test]
fn reward_examples() {
    assert_eq!(orchestration_reward(0), 1.0);
    assert!((orchestration_reward(3) - (-3.0f64).exp()).abs() < 1e-12);
    assert!((0..20).all(|b| orchestration_reward(b + 1) < orchestration_reward(b)));
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

fn stencil(f: &impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

/// Fourth-order central difference, or `None` when two step sizes disagree
/// because a ReLU kink lies inside the stencil.
fn central_diff(f: impl Fn(f64) -> f64) -> Option<f64> {
    let coarse = stencil(&f, 1e-4);
    let fine = stencil(&f, 2.5e-5);
    (rel_err(coarse, fine) < 1e-5).then_some(coarse)
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let (nets, input, _) = toy(10 + seed);
        let decision = GpgDecision {
            selected: vec![2, 0],
            scalings: vec![4, 1],
        };
        let (lp, grads) = log_prob_and_grad(&nets, &input, &decision).unwrap();
        assert!((lp - log_prob(&nets, &input, &decision).unwrap()).abs() < 1e-12);
        let mut worst: f64 = 0.0;
        let (mut checked, mut skipped) = (0, 0);
        for (k, g) in grads.buffers().into_iter().enumerate() {
            for i in 0..g.len() {
                let perturbed = |delta: f64| {
                    let mut n = nets.clone();
                    n.named_mut()[k].1.params_mut()[i] += delta;
                    log_prob(&n, &input, &decision).unwrap()
                };
                let Some(fd) = central_diff(perturbed) else {
                    skipped += 1;
                    continue;
                };
                if fd.abs() > 1e-9 || g[i].abs() > 1e-9 {
                    worst = worst.max(rel_err(fd, g[i]));
                    checked += 1;
                }
            }
        }
        assert!(
            checked > 100 && skipped * 100 <= checked,
            "{checked} checked, {skipped} skipped"
        );
        assert!(worst < 1e-5, "seed {seed}: worst relative error {worst}");
    }
}

fn optimizers() -> Vec<Adam> {
    (0..8)
        .map(|_| Adam::new(AdamConfig::with_learning_rate(1e-3)))
        .collect()
}

fn all_params(nets: &GpgNets) -> Vec<f64> {
    nets.named()
        .iter()
        .flat_map(|(_, n)| n.params().to_vec())
        .collect()
}

#[test]
fn returns_equal_to_baseline_leave_nets_unchanged() {
    let (mut nets, input, _) = toy(20);
    let decision = GpgDecision {
        selected: vec![1],
        scalings: vec![2],
    };
    let traj = vec![(input.clone(), decision.clone()), (input, decision)];
    let rewards = [0.3, 0.2];
    let mut baseline = RunningBaseline {
        sums: vec![0.5, 0.2],
        episodes: 1,
    };
    let before = all_params(&nets);
    let stats = gpg_update(
        &mut nets,
        &mut optimizers(),
        &traj,
        &rewards,
        &mut baseline,
        2,
    )
    .unwrap();
    assert_eq!(stats.grad_norm, 0.0);
    assert_eq!(all_params(&nets), before);
    assert_eq!(baseline.episodes, 2);
}

#[test]
fn first_episode_uses_zero_baseline() {
    let (mut nets, input, _) = toy(21);
    let decision = GpgDecision {
        selected: vec![0],
        scalings: vec![3],
    };
    let reward = 0.7;
    let (_, g) = log_prob_and_grad(&nets, &input, &decision).unwrap();
    let mut baseline = RunningBaseline::default();
    let stats = gpg_update(
        &mut nets,
        &mut optimizers(),
        &[(input, decision)],
        &[reward],
        &mut baseline,
        1,
    )
    .unwrap();
    assert_eq!(stats.baseline, 0.0);
    assert!((stats.grad_norm - reward * g.norm()).abs() < 1e-12);
    assert_eq!(baseline.sums, vec![reward]);
}

#[test]
fn single_frame_update_direction_matches_finite_differences() {
    let (nets, input, _) = toy(22);
    let decision = GpgDecision {
        selected: vec![1, 2],
        scalings: vec![0, 3],
    };
    let (reward, mu) = (0.4, 0.1);
    let grads = edgesched_core::gpg::episode_gradient(
        &nets,
        &[(input.clone(), decision.clone())],
        &[reward],
        &[mu],
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (k, g) in grads.buffers().into_iter().enumerate() {
        for i in (0..g.len()).step_by(3) {
            let objective = |delta: f64| {
                let mut n = nets.clone();
                n.named_mut()[k].1.params_mut()[i] += delta;
                log_prob(&n, &input, &decision).unwrap() * (reward - mu)
            };
            let Some(fd) = central_diff(objective) else {
                continue;
            };
            if fd.abs() > 1e-9 || g[i].abs() > 1e-9 {
                worst = worst.max(rel_err(fd, g[i]));
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn short_episode_is_rejected() {
    let (mut nets, input, _) = toy(23);
    let decision = GpgDecision {
        selected: vec![0],
        scalings: vec![2],
    };
    let err = gpg_update(
        &mut nets,
        &mut optimizers(),
        &[(input, decision)],
        &[0.5],
        &mut RunningBaseline::default(),
        3,
    );
    assert!(err.is_err());
}

#[test]
fn attributes_have_fixed_finite_layout() {
    let cfg = SimConfig::small_profile();
    let sim = Simulation::from_requests(&cfg, Vec::new()).unwrap();
    let input = node_attributes(sim.state(), cfg.queue_cap);
    assert_eq!(input.attrs.len(), 9);
    assert!(input
        .attrs
        .iter()
        .all(|a| a.len() == attribute_dim(5) && a.iter().all(|v| v.is_finite())));
    assert_eq!(
        input.eap_nodes,
        vec![vec![0, 1], vec![2, 3, 4], vec![5, 6, 7, 8]]
    );
}

#[test]
fn agent_trains_deterministically_and_checkpoints() {
    let cfg = SimConfig {
        episode_frames: 3,
        ..SimConfig::small_profile()
    };
    let run = || {
        let mut agent = GpgAgent::new(&cfg, GpgConfig::from_sim(&cfg), 3, 4);
        for ep in 0..2 {
            let trace =
                generate_pattern(PatternKind::P1, 3, &WorkloadConfig::default(), &cfg, ep).unwrap();
            let mut sim = Simulation::new(&cfg, &trace).unwrap();
            let out = run_episode(
                &mut sim,
                &mut edgesched_core::baselines::GreedyDispatcher::new(&cfg),
                &mut agent,
                3,
                Mode::Training,
            )
            .unwrap();
            assert!(out.conservation_held);
        }
        agent
    };
    let mut a = run();
    let b = run();
    assert_eq!(all_params(a.nets()), all_params(b.nets()));
    let stats = a.take_stats();
    assert_eq!(stats.len(), 2);
    assert_eq!(stats[0].baseline, 0.0);
    let mut bundle = edgesched_nn::CheckpointBundle::new();
    a.to_bundle(&mut bundle);
    let mut c = GpgAgent::new(&cfg, GpgConfig::from_sim(&cfg), 99, 4);
    c.load_bundle(&edgesched_nn::CheckpointBundle::from_json(&bundle.to_json()).unwrap())
        .unwrap();
    assert_eq!(all_params(c.nets()), all_params(a.nets()));
    assert_eq!(c.baseline(), a.baseline());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decisions_are_well_formed(seed in any::<u64>(), h in 1usize..=3) {
        let (nets, input, mut rng) = toy(seed % 1000);
        let (emb, _) = encode(&nets, &input).unwrap();
        let (g, _) = edgesched_core::gpg::node_scores(&nets, &input, &emb).unwrap();
        for picked in [sample_without_replacement(&g, h, &mut rng), top_k(&g, h)] {
            prop_assert_eq!(picked.len(), h);
            let mut sorted = picked.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), h);
        }
        let w = 2;
        for i in 0..(2 * w + 1) {
            let a = ScaleAction::from_index(i, w);
            prop_assert!(a.0.abs() <= w as i32);
        }
    }
}
