//! Decentralized request dispatch: a shared actor evaluated per eAP with
//! resource-context masking, trained against a centralized critic that
//! bootstraps from an episode-frozen target network.

mod agent;
mod features;

use edgesched_nn::{Adam, DenseNet, NnError};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ClusterState, Request, SimConfig};

pub use agent::{argmax, CmmacAgent, CmmacConfig, SlotStats};
pub use features::{critic_input, global_summary, local_state, FeatureLayout};

/// Validity of every dispatch target; index 0 is the cloud.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceContext(pub Vec<bool>);

impl ResourceContext {
    pub fn cloud_only(actions: usize) -> Self {
        let mut v = vec![false; actions];
        v[0] = true;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn allows(&self, action: usize) -> bool {
        self.0[action]
    }

    pub fn as_weights(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Availability thresholds used by [`resource_context`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityRule {
    pub queue_cap: usize,
    /// Memory a request needs, as a fraction of its service's replica memory.
    pub working_set_fraction: f64,
}

impl AvailabilityRule {
    pub fn from_config(config: &SimConfig) -> Self {
        Self {
            queue_cap: config.queue_cap,
            working_set_fraction: config.working_set_fraction,
        }
    }
}

/// Marks node `j` valid when it has a replica accepting the request's
/// service, its queue is below the cap and the memory not held by busy
/// replicas covers the request's working set. Every node of the cluster is
/// considered, not only the agent's own.
pub fn resource_context(
    state: &ClusterState,
    request: &Request,
    rule: AvailabilityRule,
) -> ResourceContext {
    let spec = state.service(request.service);
    let need = rule.working_set_fraction * spec.mem_per_replica;
    let mut valid = Vec::with_capacity(state.nodes.len() + 1);
    valid.push(true);
    for node in &state.nodes {
        let busy_mem: f64 = node
            .running
            .iter()
            .map(|r| state.service(r.request.service).mem_per_replica)
            .sum();
        valid.push(
            node.serving_replicas(request.service) > 0
                && node.backlog() < rule.queue_cap
                && node.mem_capacity - busy_mem >= need,
        );
    }
    ResourceContext(valid)
}

/// `(p * F) / |p * F|_1` for strictly positive `p`.
pub fn masked_policy(logits: &[f64], mask: &ResourceContext) -> Vec<f64> {
    assert_eq!(logits.len(), mask.len(), "logit and mask lengths differ");
    assert!(mask.allows(0), "the cloud must always be a valid target");
    let weighted: Vec<f64> = logits
        .iter()
        .zip(&mask.0)
        .map(|(&p, &ok)| if ok { p } else { 0.0 })
        .collect();
    let total: f64 = weighted.iter().sum();
    assert!(
        total > 0.0 && total.is_finite(),
        "masked logits must have positive mass"
    );
    weighted.iter().map(|w| w / total).collect()
}

/// Inverse-CDF draw from a masked distribution; never returns a masked
/// index, even when rounding leaves the cumulative sum short of 1.
pub fn sample_masked<R: Rng + ?Sized>(
    policy: &[f64],
    mask: &ResourceContext,
    rng: &mut R,
) -> usize {
    let mut u = rng.random::<f64>();
    let mut last_valid = 0;
    for (k, &p) in policy.iter().enumerate() {
        if !mask.allows(k) {
            continue;
        }
        last_valid = k;
        if u < p {
            return k;
        }
        u -= p;
    }
    last_valid
}

pub fn masked_log_prob(logits: &[f64], mask: &ResourceContext, action: usize) -> f64 {
    assert!(mask.allows(action), "log-probability of a masked action");
    let total: f64 = logits
        .iter()
        .zip(&mask.0)
        .filter(|(_, &ok)| ok)
        .map(|(p, _)| p)
        .sum();
    logits[action].ln() - total.ln()
}

/// Gradient of the masked log-probability of `action` with respect to the
/// positive logits.
pub fn masked_log_prob_grad(logits: &[f64], mask: &ResourceContext, action: usize) -> Vec<f64> {
    let total: f64 = logits
        .iter()
        .zip(&mask.0)
        .filter(|(_, &ok)| ok)
        .map(|(p, _)| p)
        .sum();
    logits
        .iter()
        .zip(&mask.0)
        .enumerate()
        .map(|(k, (&p, &ok))| {
            let own = if k == action { 1.0 / p } else { 0.0 };
            let norm = if ok { 1.0 / total } else { 0.0 };
            own - norm
        })
        .collect()
}

/// Logistic squashing of the utilization spread.
pub fn load_balance_penalty(xi: f64) -> f64 {
    1.0 / (1.0 + (-xi).exp())
}

/// `exp(-lambda - epsilon * nu)` where `lambda` is the slot's
/// deadline-violation ratio and `nu` the squashed utilization spread.
pub fn immediate_reward(violation_ratio: f64, utilization_std: f64, epsilon: f64) -> f64 {
    (-violation_ratio - epsilon * load_balance_penalty(utilization_std)).exp()
}

/// Late plus dropped over all requests that left the system in the slot;
/// zero when nothing left.
pub fn violation_ratio(timely: u64, late: u64, dropped: u64) -> f64 {
    let finished = timely + late + dropped;
    if finished == 0 {
        0.0
    } else {
        (late + dropped) as f64 / finished as f64
    }
}

/// Policy-weighted one-step bootstrap target.
pub fn critic_target(policy: &[f64], reward: f64, next_value: f64, gamma: f64) -> f64 {
    policy
        .iter()
        .map(|p| p * (reward + gamma * next_value))
        .sum()
}

pub fn advantage(reward: f64, next_value: f64, value: f64, gamma: f64) -> f64 {
    reward + gamma * next_value - value
}

/// One Adam step on the mean squared error between the critic and the
/// targets. Returns the loss before the step.
pub fn critic_update(
    critic: &mut DenseNet,
    adam: &mut Adam,
    batch: &[(Vec<f64>, f64)],
) -> Result<f64, NnError> {
    let (loss, grads) = critic_loss_grad(critic, batch)?;
    critic.apply_adam(adam, &grads)?;
    Ok(loss)
}

/// Mean squared error and its parameter gradient.
pub fn critic_loss_grad(
    critic: &DenseNet,
    batch: &[(Vec<f64>, f64)],
) -> Result<(f64, Vec<f64>), NnError> {
    let mut grads = vec![0.0; critic.num_params()];
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (input, target) in batch {
        let (out, cache) = critic.forward(input)?;
        let err = out[0] - target;
        loss += err * err * scale;
        critic.backward_into(&cache, &[2.0 * err * scale], &mut grads)?;
    }
    Ok((loss, grads))
}

/// One stored dispatch decision, ready for a policy-gradient step.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorSample {
    pub state: Vec<f64>,
    pub mask: ResourceContext,
    pub action: usize,
    pub advantage: f64,
}

/// Gradient of `mean(A * log pi(a|s))` with respect to the actor parameters.
pub fn actor_objective_grad(actor: &DenseNet, batch: &[ActorSample]) -> Result<Vec<f64>, NnError> {
    let mut grads = vec![0.0; actor.num_params()];
    if batch.is_empty() {
        return Ok(grads);
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        if s.advantage == 0.0 {
            continue;
        }
        let (logits, cache) = actor.forward(&s.state)?;
        let dlogp = masked_log_prob_grad(&logits, &s.mask, s.action);
        let out_grad: Vec<f64> = dlogp.iter().map(|g| g * s.advantage * scale).collect();
        actor.backward_into(&cache, &out_grad, &mut grads)?;
    }
    Ok(grads)
}

/// Ascends the advantage-weighted masked log-likelihood. Returns the L2
/// norm of the applied gradient.
pub fn actor_update(
    actor: &mut DenseNet,
    adam: &mut Adam,
    batch: &[ActorSample],
) -> Result<f64, NnError> {
    let mut grads = actor_objective_grad(actor, batch)?;
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    grads.iter_mut().for_each(|g| *g = -*g);
    actor.apply_adam(adam, &grads)?;
    Ok(norm)
}
