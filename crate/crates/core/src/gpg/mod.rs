//! Frame-level service orchestration: a three-level graph encoder over
//! nodes, eAPs and the cluster, a head that picks high-value nodes without
//! replacement, a head that picks one scaling step per picked node, and an
//! episodic policy-gradient trainer with a running-mean baseline.

mod agent;
mod encode;

use edgesched_nn::{logsumexp, softmax, ForwardCache, NnError};
use rand::Rng;

use crate::domain::{ClusterState, ScaleAction, SimConfig};

pub use agent::{gpg_update, EpisodeStats, GpgAgent, GpgConfig, GpgError, RunningBaseline};
pub use encode::{
    embed_eaps_and_cluster, embed_nodes, encode, encode_backward, Embeddings, EncodeCache,
    GpgGrads, GpgNets, GpgShape, GraphInput,
};

/// Seconds of slack mapped to a feature value of 1.
const SLACK_SCALE: f64 = 2.0;

/// Attribute dimension for `services` services.
pub fn attribute_dim(services: usize) -> usize {
    8 + 2 * services
}

/// Per node: free CPU, memory and storage fractions; LAN and cloud
/// latency; queue length, min and mean slack; a deployed flag and a
/// normalized replica count per service.
pub fn node_attributes(state: &ClusterState, queue_cap: usize) -> GraphInput {
    let now = state.now();
    let attrs = state
        .nodes
        .iter()
        .map(|node| {
            let mut a = Vec::with_capacity(attribute_dim(state.num_services()));
            a.extend(node.remaining_fractions(&state.services));
            a.push(node.lan_latency);
            a.push(node.cloud_latency);
            let q = node.queue_summary(now);
            a.push(q.len as f64 / queue_cap as f64);
            a.push(q.min_slack.max(0.0) / SLACK_SCALE);
            a.push(q.mean_slack.max(0.0) / SLACK_SCALE);
            for &d in &node.deployments {
                a.push(if d > 0 { 1.0 } else { 0.0 });
            }
            for (spec, &d) in state.services.iter().zip(&node.deployments) {
                let fit = (node.cpu_capacity / spec.cpu_per_replica).floor().max(1.0);
                a.push(d as f64 / fit);
            }
            a
        })
        .collect();
    let eap_nodes = state
        .eaps
        .iter()
        .map(|e| e.nodes.iter().map(|n| n.index()).collect())
        .collect();
    GraphInput { attrs, eap_nodes }
}

/// `exp(-total edge backlog)`.
pub fn orchestration_reward(total_backlog: usize) -> f64 {
    (-(total_backlog as f64)).exp()
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Node-value scores for every node with their forward caches.
pub fn node_scores(
    nets: &GpgNets,
    input: &GraphInput,
    emb: &Embeddings,
) -> Result<(Vec<f64>, Vec<ForwardCache>), NnError> {
    let mut scores = Vec::with_capacity(emb.x.len());
    let mut caches = Vec::with_capacity(emb.x.len());
    for (n, x) in emb.x.iter().enumerate() {
        let b = input.eap_of(n);
        let (out, c) = nets.node_value.forward(&concat(&[x, &emb.y[b], &emb.z]))?;
        scores.push(out[0]);
        caches.push(c);
    }
    Ok((scores, caches))
}

/// Scores of every scaling action for one node, ordered from `-W` to `W`.
pub fn scale_scores(
    nets: &GpgNets,
    input: &GraphInput,
    emb: &Embeddings,
    node: usize,
) -> Result<(Vec<f64>, Vec<ForwardCache>), NnError> {
    let b = input.eap_of(node);
    let base = concat(&[&emb.x[node], &emb.y[b], &emb.z]);
    let mut scores = Vec::with_capacity(nets.scale_actions);
    let mut caches = Vec::with_capacity(nets.scale_actions);
    for l in 0..nets.scale_actions {
        let mut v = base.clone();
        v.extend((0..nets.scale_actions).map(|k| if k == l { 1.0 } else { 0.0 }));
        let (out, c) = nets.scale_value.forward(&v)?;
        scores.push(out[0]);
        caches.push(c);
    }
    Ok((scores, caches))
}

/// Draws `count` distinct indices, each from the softmax of the scores not
/// yet taken.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    scores: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count.min(scores.len()) {
        let sub: Vec<f64> = remaining.iter().map(|&i| scores[i]).collect();
        let p = softmax(&sub).expect("finite scores");
        let k = sample_index(&p, rng);
        picked.push(remaining.remove(k));
    }
    picked
}

/// The `count` highest scores; ties go to the lower index.
pub fn top_k(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Log-probability of drawing `picked` in order without replacement.
pub fn selection_log_prob(scores: &[f64], picked: &[usize]) -> f64 {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut total = 0.0;
    for &i in picked {
        let sub: Vec<f64> = remaining.iter().map(|&r| scores[r]).collect();
        total += scores[i] - logsumexp(&sub).expect("finite scores");
        remaining.retain(|&r| r != i);
    }
    total
}

/// Gradient of [`selection_log_prob`] with respect to the scores.
pub fn selection_log_prob_grad(scores: &[f64], picked: &[usize]) -> Vec<f64> {
    let mut grad = vec![0.0; scores.len()];
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    for &i in picked {
        let sub: Vec<f64> = remaining.iter().map(|&r| scores[r]).collect();
        let p = softmax(&sub).expect("finite scores");
        for (&r, pr) in remaining.iter().zip(&p) {
            grad[r] -= pr;
        }
        grad[i] += 1.0;
        remaining.retain(|&r| r != i);
    }
    grad
}

/// One frame's orchestration decision.
#[derive(Clone, Debug, PartialEq)]
pub struct GpgDecision {
    pub selected: Vec<usize>,
    /// Scaling index per selected node, `0` meaning `-W`.
    pub scalings: Vec<usize>,
}

impl GpgDecision {
    pub fn actions(&self, services: usize) -> Vec<ScaleAction> {
        self.scalings
            .iter()
            .map(|&i| ScaleAction::from_index(i, services))
            .collect()
    }
}

/// Routes a head's input gradient `[dx | dy | dz]` to its three sources.
fn split_head_grad(din: &[f64], d: usize, dx: &mut [f64], dy: &mut [f64], dz: &mut [f64]) {
    dx.iter_mut().zip(&din[..d]).for_each(|(a, g)| *a += g);
    dy.iter_mut().zip(&din[d..2 * d]).for_each(|(a, g)| *a += g);
    dz.iter_mut()
        .zip(&din[2 * d..3 * d])
        .for_each(|(a, g)| *a += g);
}

/// Joint log-probability of a decision and its gradient with respect to
/// every network parameter.
pub fn log_prob_and_grad(
    nets: &GpgNets,
    input: &GraphInput,
    decision: &GpgDecision,
) -> Result<(f64, GpgGrads), NnError> {
    let (emb, cache) = encode(nets, input)?;
    let d = nets.attr_dim;
    let mut grads = nets.zero_grads();
    let mut dx = vec![vec![0.0; d]; emb.x.len()];
    let mut dy = vec![vec![0.0; d]; emb.y.len()];
    let mut dz = vec![0.0; d];
    let (g, g_caches) = node_scores(nets, input, &emb)?;
    let mut log_prob = selection_log_prob(&g, &decision.selected);
    let dg = selection_log_prob_grad(&g, &decision.selected);
    for (n, (c, &dgn)) in g_caches.iter().zip(&dg).enumerate() {
        if dgn == 0.0 {
            continue;
        }
        let din = nets
            .node_value
            .backward_into(c, &[dgn], &mut grads.node_value)?;
        split_head_grad(&din, d, &mut dx[n], &mut dy[input.eap_of(n)], &mut dz);
    }
    for (&n, &l) in decision.selected.iter().zip(&decision.scalings) {
        let (q, q_caches) = scale_scores(nets, input, &emb, n)?;
        log_prob += q[l] - logsumexp(&q)?;
        let p = softmax(&q)?;
        for (k, c) in q_caches.iter().enumerate() {
            let dq = if k == l { 1.0 } else { 0.0 } - p[k];
            let din = nets
                .scale_value
                .backward_into(c, &[dq], &mut grads.scale_value)?;
            split_head_grad(&din, d, &mut dx[n], &mut dy[input.eap_of(n)], &mut dz);
        }
    }
    encode_backward(nets, input, &cache, dx, dy, &dz, &mut grads)?;
    Ok((log_prob, grads))
}

/// Joint log-probability of a decision, without gradients.
pub fn log_prob(
    nets: &GpgNets,
    input: &GraphInput,
    decision: &GpgDecision,
) -> Result<f64, NnError> {
    let (emb, _) = encode(nets, input)?;
    let (g, _) = node_scores(nets, input, &emb)?;
    let mut total = selection_log_prob(&g, &decision.selected);
    for (&n, &l) in decision.selected.iter().zip(&decision.scalings) {
        let (q, _) = scale_scores(nets, input, &emb, n)?;
        total += q[l] - logsumexp(&q)?;
    }
    Ok(total)
}

/// Reward-to-go `G_t = sum_{t' >= t} r_t'`.
pub fn rewards_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (k, r) in rewards.iter().enumerate().rev() {
        acc += r;
        out[k] = acc;
    }
    out
}

/// Ascent direction `sum_t grad log pi_t * (G_t - baseline_t)`.
pub fn episode_gradient(
    nets: &GpgNets,
    trajectory: &[(GraphInput, GpgDecision)],
    rewards: &[f64],
    baseline: &[f64],
) -> Result<GpgGrads, NnError> {
    let returns = rewards_to_go(rewards);
    let mut total = nets.zero_grads();
    for (t, (input, decision)) in trajectory.iter().enumerate() {
        let weight = returns[t] - baseline.get(t).copied().unwrap_or(0.0);
        if weight == 0.0 {
            continue;
        }
        let (_, g) = log_prob_and_grad(nets, input, decision)?;
        total.add_scaled(&g, weight);
    }
    Ok(total)
}

/// Number of scaling actions, `2W + 1`.
pub fn scale_action_count(config: &SimConfig) -> usize {
    2 * config.num_services() + 1
}
