use edgesched_nn::{Adam, AdamConfig, CheckpointBundle, NnError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    attribute_dim, encode, episode_gradient, node_attributes, node_scores, orchestration_reward,
    rewards_to_go, sample_index, sample_without_replacement, scale_scores, top_k, GpgDecision,
    GpgNets, GpgShape, GraphInput,
};
use crate::cmmac::argmax;
use crate::domain::{MetricsRecord, NodeId, ScaleAction, SimConfig};
use crate::sim::{Orchestrator, Simulation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpgConfig {
    pub shape: GpgShape,
    pub learning_rate: f64,
    pub high_value_nodes: usize,
    pub episode_frames: usize,
    pub queue_cap: usize,
    /// Outside training, pick the top-scoring nodes and the argmax scaling
    /// instead of sampling.
    pub greedy_evaluation: bool,
}

impl GpgConfig {
    pub fn from_sim(config: &SimConfig) -> Self {
        Self {
            shape: GpgShape::default(),
            learning_rate: 1e-3,
            high_value_nodes: config.high_value_nodes,
            episode_frames: config.episode_frames,
            queue_cap: config.queue_cap,
            greedy_evaluation: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum GpgError {
    #[error("episode has {got} frames, expected {expected}")]
    ShortEpisode { got: usize, expected: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-episode training log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: u64,
    pub frames: usize,
    /// Reward-to-go from the first frame.
    pub episode_return: f64,
    /// Baseline applied to the first frame.
    pub baseline: f64,
    pub grad_norm: f64,
}

/// Mean reward-to-go per frame index over completed episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningBaseline {
    pub sums: Vec<f64>,
    pub episodes: u64,
}

impl RunningBaseline {
    /// Zero until an episode has been recorded.
    pub fn means(&self, frames: usize) -> Vec<f64> {
        (0..frames)
            .map(|t| {
                if self.episodes == 0 {
                    0.0
                } else {
                    self.sums.get(t).copied().unwrap_or(0.0) / self.episodes as f64
                }
            })
            .collect()
    }

    pub fn record(&mut self, returns: &[f64]) {
        if self.sums.len() < returns.len() {
            self.sums.resize(returns.len(), 0.0);
        }
        self.sums.iter_mut().zip(returns).for_each(|(s, r)| *s += r);
        self.episodes += 1;
    }
}

/// One policy-gradient step over a finished episode, then folds the
/// episode's returns into the baseline.
pub fn gpg_update(
    nets: &mut GpgNets,
    optimizers: &mut [Adam],
    trajectory: &[(GraphInput, GpgDecision)],
    rewards: &[f64],
    baseline: &mut RunningBaseline,
    expected_frames: usize,
) -> Result<EpisodeStats, GpgError> {
    if trajectory.len() < expected_frames || rewards.len() < trajectory.len() {
        return Err(GpgError::ShortEpisode {
            got: trajectory.len().min(rewards.len()),
            expected: expected_frames,
        });
    }
    let rewards = &rewards[..trajectory.len()];
    let mu = baseline.means(trajectory.len());
    let grads = episode_gradient(nets, trajectory, rewards, &mu)?;
    let norm = grads.norm();
    for ((_, net), (adam, g)) in nets
        .named_mut()
        .into_iter()
        .zip(optimizers.iter_mut().zip(grads.buffers()))
    {
        let descent: Vec<f64> = g.iter().map(|v| -v).collect();
        net.apply_adam(adam, &descent)?;
    }
    let returns = rewards_to_go(rewards);
    baseline.record(&returns);
    Ok(EpisodeStats {
        episode: baseline.episodes,
        frames: trajectory.len(),
        episode_return: returns.first().copied().unwrap_or(0.0),
        baseline: mu.first().copied().unwrap_or(0.0),
        grad_norm: norm,
    })
}

/// Stepwise orchestrator: picks high-value nodes, then one scaling step
/// for each.
#[derive(Clone, Debug)]
pub struct GpgAgent {
    config: GpgConfig,
    services: usize,
    nets: GpgNets,
    optimizers: Vec<Adam>,
    rng: ChaCha8Rng,
    training: bool,
    trajectory: Vec<(GraphInput, GpgDecision)>,
    rewards: Vec<f64>,
    baseline: RunningBaseline,
    stats: Vec<EpisodeStats>,
}

impl GpgAgent {
    pub fn new(sim: &SimConfig, config: GpgConfig, init_seed: u64, sampling_seed: u64) -> Self {
        let services = sim.num_services();
        let mut init = ChaCha8Rng::seed_from_u64(init_seed);
        let nets = GpgNets::new(
            attribute_dim(services),
            2 * services + 1,
            &config.shape,
            &mut init,
        )
        .expect("valid orchestration layout");
        let optimizers = (0..8)
            .map(|_| Adam::new(AdamConfig::with_learning_rate(config.learning_rate)))
            .collect();
        Self {
            config,
            services,
            nets,
            optimizers,
            rng: ChaCha8Rng::seed_from_u64(sampling_seed),
            training: true,
            trajectory: Vec::new(),
            rewards: Vec::new(),
            baseline: RunningBaseline::default(),
            stats: Vec::new(),
        }
    }

    pub fn nets(&self) -> &GpgNets {
        &self.nets
    }

    pub fn baseline(&self) -> &RunningBaseline {
        &self.baseline
    }

    pub fn take_stats(&mut self) -> Vec<EpisodeStats> {
        std::mem::take(&mut self.stats)
    }

    /// Encodes the state and picks nodes and scaling steps.
    pub fn decide(&mut self, input: &GraphInput) -> GpgDecision {
        let (emb, _) = encode(&self.nets, input).expect("attribute layout");
        let (g, _) = node_scores(&self.nets, input, &emb).expect("attribute layout");
        let h = self.config.high_value_nodes.min(g.len());
        let sample = self.training || !self.config.greedy_evaluation;
        let selected = if sample {
            sample_without_replacement(&g, h, &mut self.rng)
        } else {
            top_k(&g, h)
        };
        let scalings = selected
            .iter()
            .map(|&n| {
                let (q, _) = scale_scores(&self.nets, input, &emb, n).expect("attribute layout");
                if sample {
                    let p = edgesched_nn::softmax(&q).expect("finite scores");
                    sample_index(&p, &mut self.rng)
                } else {
                    argmax(&q)
                }
            })
            .collect();
        GpgDecision { selected, scalings }
    }

    pub fn to_bundle(&self, bundle: &mut CheckpointBundle) {
        for (name, net) in self.nets.named() {
            bundle.insert_net(name, net);
        }
        bundle
            .vectors
            .insert("gpg.baseline_sums".into(), self.baseline.sums.clone());
        bundle.vectors.insert(
            "gpg.baseline_episodes".into(),
            vec![self.baseline.episodes as f64],
        );
    }

    pub fn load_bundle(&mut self, bundle: &CheckpointBundle) -> Result<(), NnError> {
        for (name, net) in self.nets.named_mut() {
            net.copy_params_from(&bundle.net(name)?)?;
        }
        if let Some(s) = bundle.vectors.get("gpg.baseline_sums") {
            self.baseline.sums = s.clone();
        }
        if let Some(e) = bundle.vectors.get("gpg.baseline_episodes") {
            self.baseline.episodes = e.first().copied().unwrap_or(0.0) as u64;
        }
        Ok(())
    }
}

impl Orchestrator for GpgAgent {
    fn orchestrate(&mut self, sim: &Simulation) -> Vec<(NodeId, ScaleAction)> {
        let input = node_attributes(sim.state(), self.config.queue_cap);
        let decision = self.decide(&input);
        let plan = decision
            .selected
            .iter()
            .zip(decision.actions(self.services))
            .map(|(&n, a)| (NodeId::from_index(n), a))
            .collect();
        if self.training {
            self.trajectory.push((input, decision));
        }
        plan
    }

    fn end_frame(&mut self, _sim: &Simulation, record: &MetricsRecord) {
        if self.training {
            self.rewards.push(orchestration_reward(record.backlog()));
        }
    }

    fn end_episode(&mut self, _sim: &Simulation) {
        if self.training && !self.trajectory.is_empty() {
            // Partial episodes are discarded rather than used for an update.
            if let Ok(stats) = gpg_update(
                &mut self.nets,
                &mut self.optimizers,
                &self.trajectory,
                &self.rewards,
                &mut self.baseline,
                self.config.episode_frames,
            ) {
                self.stats.push(stats);
            }
        }
        self.trajectory.clear();
        self.rewards.clear();
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
        self.trajectory.clear();
        self.rewards.clear();
    }
}
