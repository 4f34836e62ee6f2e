//! Assembles dispatch and orchestration policies from a scheduler spec.

use edgesched_core::baselines::{GreedyDispatcher, NativeAutoscaler, RandomDispatcher};
use edgesched_core::cmmac::{CmmacAgent, CmmacConfig, SlotStats};
use edgesched_core::domain::MetricsRecord;
use edgesched_core::domain::{seed, DispatchTarget, EapId, NodeId, ScaleAction};
use edgesched_core::gpg::{EpisodeStats, GpgAgent, GpgConfig};
use edgesched_core::sim::{Dispatcher, Orchestrator, Simulation, SlotReport, StaticOrchestrator};
use edgesched_nn::{CheckpointBundle, NnError};

use crate::config::{EvalPolicy, HarnessConfig, SchedulerSpec};

pub enum DispatchPolicy {
    Cmmac(Box<CmmacAgent>),
    Greedy(GreedyDispatcher),
    Random(RandomDispatcher),
}

impl DispatchPolicy {
    fn inner(&mut self) -> &mut dyn Dispatcher {
        match self {
            Self::Cmmac(a) => a.as_mut(),
            Self::Greedy(g) => g,
            Self::Random(r) => r,
        }
    }
}

impl Dispatcher for DispatchPolicy {
    fn begin_slot(&mut self, sim: &Simulation) {
        self.inner().begin_slot(sim)
    }

    fn decide(&mut self, sim: &Simulation, eap: EapId) -> DispatchTarget {
        self.inner().decide(sim, eap)
    }

    fn end_slot(&mut self, sim: &Simulation, report: &SlotReport) {
        self.inner().end_slot(sim, report)
    }

    fn end_episode(&mut self, sim: &Simulation) {
        self.inner().end_episode(sim)
    }

    fn set_training(&mut self, training: bool) {
        self.inner().set_training(training)
    }
}

pub enum OrchestrationPolicy {
    Gpg(Box<GpgAgent>),
    Native(NativeAutoscaler),
    Static(StaticOrchestrator),
}

impl OrchestrationPolicy {
    fn inner(&mut self) -> &mut dyn Orchestrator {
        match self {
            Self::Gpg(a) => a.as_mut(),
            Self::Native(n) => n,
            Self::Static(s) => s,
        }
    }
}

impl Orchestrator for OrchestrationPolicy {
    fn orchestrate(&mut self, sim: &Simulation) -> Vec<(NodeId, ScaleAction)> {
        self.inner().orchestrate(sim)
    }

    fn end_frame(&mut self, sim: &Simulation, record: &MetricsRecord) {
        self.inner().end_frame(sim, record)
    }

    fn end_episode(&mut self, sim: &Simulation) {
        self.inner().end_episode(sim)
    }

    fn set_training(&mut self, training: bool) {
        self.inner().set_training(training)
    }
}

/// A dispatcher paired with an orchestrator.
pub struct Scheduler {
    pub spec: SchedulerSpec,
    pub dispatch: DispatchPolicy,
    pub orchestration: OrchestrationPolicy,
}

impl Scheduler {
    /// Fresh policies. Learned networks draw their initial weights from the
    /// `INIT` stream and their exploration from the `SAMPLING` stream.
    pub fn new(config: &HarnessConfig) -> Self {
        let sim = &config.sim;
        let init = seed::derive(config.seed, seed::INIT);
        let sampling = seed::derive(config.seed, seed::SAMPLING);
        let spec = config.scheduler;
        let greedy_evaluation = config.eval_policy == EvalPolicy::Greedy;
        let dispatch = if spec.learns_dispatch() {
            let cmmac = CmmacConfig {
                actor_learning_rate: config.actor_lr,
                critic_learning_rate: config.critic_lr,
                greedy_evaluation,
                ..CmmacConfig::from_sim(sim)
            };
            DispatchPolicy::Cmmac(Box::new(CmmacAgent::new(sim, cmmac, init, sampling)))
        } else if spec == SchedulerSpec::Random {
            DispatchPolicy::Random(RandomDispatcher::new(sim, sampling))
        } else {
            DispatchPolicy::Greedy(GreedyDispatcher::new(sim))
        };
        let orchestration = if spec.learns_orchestration() {
            let gpg = GpgConfig {
                learning_rate: config.gpg_lr,
                greedy_evaluation,
                ..GpgConfig::from_sim(sim)
            };
            // Separate streams so the two agents never share draws.
            OrchestrationPolicy::Gpg(Box::new(GpgAgent::new(
                sim,
                gpg,
                seed::splitmix64(init),
                seed::splitmix64(sampling),
            )))
        } else if spec == SchedulerSpec::Random {
            OrchestrationPolicy::Static(StaticOrchestrator)
        } else {
            OrchestrationPolicy::Native(NativeAutoscaler::new(sim, config.autoscaler))
        };
        Self {
            spec,
            dispatch,
            orchestration,
        }
    }

    pub fn cmmac(&self) -> Option<&CmmacAgent> {
        match &self.dispatch {
            DispatchPolicy::Cmmac(a) => Some(a),
            _ => None,
        }
    }

    pub fn gpg(&self) -> Option<&GpgAgent> {
        match &self.orchestration {
            OrchestrationPolicy::Gpg(a) => Some(a),
            _ => None,
        }
    }

    pub fn take_dispatch_stats(&mut self) -> Vec<SlotStats> {
        match &mut self.dispatch {
            DispatchPolicy::Cmmac(a) => a.take_stats(),
            _ => Vec::new(),
        }
    }

    pub fn take_orchestration_stats(&mut self) -> Vec<EpisodeStats> {
        match &mut self.orchestration {
            OrchestrationPolicy::Gpg(a) => a.take_stats(),
            _ => Vec::new(),
        }
    }

    /// All learned networks, or `None` for a scheduler with nothing to save.
    pub fn checkpoint(&self) -> Option<CheckpointBundle> {
        if !self.spec.is_learned() {
            return None;
        }
        let mut bundle = CheckpointBundle::new();
        if let Some(a) = self.cmmac() {
            a.to_bundle(&mut bundle);
        }
        if let Some(a) = self.gpg() {
            a.to_bundle(&mut bundle);
        }
        Some(bundle)
    }

    pub fn load_checkpoint(&mut self, bundle: &CheckpointBundle) -> Result<(), NnError> {
        if let DispatchPolicy::Cmmac(a) = &mut self.dispatch {
            a.load_bundle(bundle)?;
        }
        if let OrchestrationPolicy::Gpg(a) = &mut self.orchestration {
            a.load_bundle(bundle)?;
        }
        Ok(())
    }

    pub fn parts(&mut self) -> (&mut DispatchPolicy, &mut OrchestrationPolicy) {
        (&mut self.dispatch, &mut self.orchestration)
    }
}
