use edgesched_nn::{Activation, Adam, AdamConfig, CheckpointBundle, DenseNet, NnError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    actor_update, advantage, critic_input, critic_target, critic_update, global_summary,
    immediate_reward, local_state, masked_policy, resource_context, sample_masked, violation_ratio,
    ActorSample, AvailabilityRule, FeatureLayout, ResourceContext,
};
use crate::domain::{ClusterState, DispatchTarget, EapId, SimConfig};
use crate::sim::{Dispatcher, Simulation, SlotReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmmacConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Initial bias of the actor's output units. A positive value keeps the
    /// ReLU+1 outputs in their linear region at the start of training.
    pub actor_output_bias: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub gamma: f64,
    pub epsilon_lb: f64,
    pub availability: AvailabilityRule,
    /// Outside training, dispatch to the most probable target instead of
    /// sampling from the masked policy.
    pub greedy_evaluation: bool,
}

impl CmmacConfig {
    pub fn from_sim(config: &SimConfig) -> Self {
        Self {
            actor_hidden: vec![256, 128, 32],
            critic_hidden: vec![256, 128, 64, 32],
            actor_output_bias: 1.0,
            actor_learning_rate: 5e-4,
            critic_learning_rate: 5e-4,
            gamma: config.gamma,
            epsilon_lb: config.epsilon_lb,
            availability: AvailabilityRule::from_config(config),
            greedy_evaluation: true,
        }
    }
}

/// Training diagnostics of one slot's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub slot: u64,
    pub transitions: usize,
    pub reward: f64,
    pub critic_loss: f64,
    pub mean_advantage: f64,
    pub actor_grad_norm: f64,
}

#[derive(Clone, Debug)]
struct Pending {
    eap: EapId,
    local: Vec<f64>,
    critic_input: Vec<f64>,
    mask: ResourceContext,
    action: usize,
    policy: Vec<f64>,
}

/// Shared dispatch actor with centralized critic and frozen target critic.
#[derive(Clone, Debug)]
pub struct CmmacAgent {
    config: CmmacConfig,
    layout: FeatureLayout,
    actor: DenseNet,
    critic: DenseNet,
    target: DenseNet,
    actor_adam: Adam,
    critic_adam: Adam,
    rng: ChaCha8Rng,
    training: bool,
    pending: Vec<Pending>,
    reward: Option<f64>,
    stats: Vec<SlotStats>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl CmmacAgent {
    pub fn new(sim: &SimConfig, config: CmmacConfig, init_seed: u64, sampling_seed: u64) -> Self {
        let layout = FeatureLayout::new(sim);
        let mut init = ChaCha8Rng::seed_from_u64(init_seed);
        let mut actor = DenseNet::mlp(
            &widths(layout.local_dim(), &config.actor_hidden, layout.actions()),
            Activation::Relu,
            Activation::ReluPlusOne,
            &mut init,
        )
        .expect("valid actor layout");
        let last = actor.num_layers() - 1;
        actor.layer_mut(last).1.fill(config.actor_output_bias);
        let critic = DenseNet::mlp(
            &widths(layout.critic_dim(), &config.critic_hidden, 1),
            Activation::Relu,
            Activation::Identity,
            &mut init,
        )
        .expect("valid critic layout");
        let target = critic.clone();
        Self {
            actor_adam: Adam::new(AdamConfig::with_learning_rate(config.actor_learning_rate)),
            critic_adam: Adam::new(AdamConfig::with_learning_rate(config.critic_learning_rate)),
            config,
            layout,
            actor,
            critic,
            target,
            rng: ChaCha8Rng::seed_from_u64(sampling_seed),
            training: true,
            pending: Vec::new(),
            reward: None,
            stats: Vec::new(),
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn target(&self) -> &DenseNet {
        &self.target
    }

    /// Per-slot update diagnostics accumulated since the last call.
    pub fn take_stats(&mut self) -> Vec<SlotStats> {
        std::mem::take(&mut self.stats)
    }

    /// Masked dispatch distribution of the head-of-line request at `eap`.
    pub fn policy(&self, state: &ClusterState, eap: EapId) -> Option<(Vec<f64>, ResourceContext)> {
        let request = state.eap(eap).dispatch_queue.front()?;
        let local = local_state(&self.layout, state, eap, Some(request));
        let mask = resource_context(state, request, self.config.availability);
        let logits = self
            .actor
            .predict(&local)
            .expect("actor input matches layout");
        Some((masked_policy(&logits, &mask), mask))
    }

    /// Turns last slot's decisions into transitions using the current
    /// state as the successor, then runs one critic and one actor step.
    fn finalize(&mut self, state: &ClusterState) {
        if self.pending.is_empty() {
            return;
        }
        let reward = self.reward.take().unwrap_or(0.0);
        let gamma = self.config.gamma;
        let global = global_summary(&self.layout, state);
        let pending = std::mem::take(&mut self.pending);
        let mut critic_batch = Vec::with_capacity(pending.len());
        let mut actor_batch = Vec::with_capacity(pending.len());
        for p in pending {
            let head = state.eap(p.eap).dispatch_queue.front();
            let next_local = local_state(&self.layout, state, p.eap, head);
            let next_value = self
                .target
                .predict(&critic_input(&next_local, &global))
                .expect("critic input")[0];
            let value = self.critic.predict(&p.critic_input).expect("critic input")[0];
            let adv = advantage(reward, next_value, value, gamma);
            critic_batch.push((
                p.critic_input,
                critic_target(&p.policy, reward, next_value, gamma),
            ));
            actor_batch.push(ActorSample {
                state: p.local,
                mask: p.mask,
                action: p.action,
                advantage: adv,
            });
        }
        let loss = critic_update(&mut self.critic, &mut self.critic_adam, &critic_batch)
            .expect("critic update");
        let norm = actor_update(&mut self.actor, &mut self.actor_adam, &actor_batch)
            .expect("actor update");
        let n = actor_batch.len();
        self.stats.push(SlotStats {
            slot: state.slot,
            transitions: n,
            reward,
            critic_loss: loss,
            mean_advantage: actor_batch.iter().map(|s| s.advantage).sum::<f64>() / n as f64,
            actor_grad_norm: norm,
        });
    }

    pub fn to_bundle(&self, bundle: &mut CheckpointBundle) {
        bundle.insert_net("cmmac.actor", &self.actor);
        bundle.insert_net("cmmac.critic", &self.critic);
        bundle.insert_net("cmmac.target", &self.target);
    }

    /// Loads networks saved by [`Self::to_bundle`]; shapes must match.
    pub fn load_bundle(&mut self, bundle: &CheckpointBundle) -> Result<(), NnError> {
        let actor = bundle.net("cmmac.actor")?;
        let critic = bundle.net("cmmac.critic")?;
        let target = bundle.net("cmmac.target")?;
        self.actor.copy_params_from(&actor)?;
        self.critic.copy_params_from(&critic)?;
        self.target.copy_params_from(&target)?;
        Ok(())
    }
}

impl Dispatcher for CmmacAgent {
    fn begin_slot(&mut self, sim: &Simulation) {
        if self.training {
            self.finalize(sim.state());
        }
    }

    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget {
        let state = sim.state();
        let Some(request) = state.eap(eap).dispatch_queue.front() else {
            return DispatchTarget::Cloud;
        };
        let local = local_state(&self.layout, state, eap, Some(request));
        let mask = resource_context(state, request, self.config.availability);
        let logits = self
            .actor
            .predict(&local)
            .expect("actor input matches layout");
        let policy = masked_policy(&logits, &mask);
        let action = if self.training || !self.config.greedy_evaluation {
            sample_masked(&policy, &mask, &mut self.rng)
        } else {
            argmax(&policy)
        };
        if self.training {
            let global = global_summary(&self.layout, state);
            self.pending.push(Pending {
                eap,
                critic_input: critic_input(&local, &global),
                local,
                mask,
                action,
                policy,
            });
        }
        DispatchTarget::from_action(action)
    }

    fn end_slot(&mut self, sim: &Simulation, report: &SlotReport) {
        if self.training && !self.pending.is_empty() {
            let ratio = violation_ratio(
                report.timely_edge + report.timely_cloud,
                report.late,
                report.dropped,
            );
            let xi = sim.state().utilization_std();
            self.reward = Some(immediate_reward(ratio, xi, self.config.epsilon_lb));
        }
    }

    fn end_episode(&mut self, sim: &Simulation) {
        if self.training {
            self.finalize(sim.state());
            self.target
                .copy_params_from(&self.critic)
                .expect("target shares critic layout");
        }
        self.pending.clear();
        self.reward = None;
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
        self.pending.clear();
        self.reward = None;
    }
}

/// First index of the largest entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}
