use serde::{Deserialize, Serialize};

use super::{
    measure_scheduling_delay, DispatchAction, Dispatcher, Orchestrator, SimError, Simulation,
};
use crate::domain::{Counters, EapId, MetricsRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Training,
    Evaluation,
}

/// Ordering log of the two-time-scale loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Orchestrated { frame: usize, slot: u64 },
    Dispatched { frame: usize, slot: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub records: Vec<MetricsRecord>,
    pub events: Vec<Event>,
    pub counters: Counters,
    pub residual: u64,
    pub conservation_held: bool,
}

impl EpisodeOutcome {
    pub fn mean_phi_f(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.phi_f).sum::<f64>() / self.records.len() as f64
    }
}

/// Runs `frames` frames: each frame first applies the orchestration plan,
/// then executes its slots with one dispatch decision per non-empty eAP.
pub fn run_episode(
    sim: &mut Simulation,
    dispatcher: &mut dyn Dispatcher,
    orchestrator: &mut dyn Orchestrator,
    frames: usize,
    mode: Mode,
) -> Result<EpisodeOutcome, SimError> {
    let training = mode == Mode::Training;
    dispatcher.set_training(training);
    orchestrator.set_training(training);
    let beta = sim.config().beta;
    let num_eaps = sim.state().eaps.len();
    let mut records = Vec::with_capacity(frames);
    let mut events = Vec::new();
    for _ in 0..frames {
        let frame = sim.frame();
        let (plan, orchestration_delay) =
            measure_scheduling_delay(|| orchestrator.orchestrate(sim));
        sim.apply_plan(&plan)?;
        events.push(Event::Orchestrated {
            frame,
            slot: sim.state().slot,
        });
        let mut dispatch_time = 0.0;
        let mut decisions = 0u64;
        let mut record = None;
        for _ in 0..beta {
            sim.admit_arrivals();
            dispatcher.begin_slot(sim);
            let mut actions = Vec::new();
            for b in 0..num_eaps {
                let eap = EapId::from_index(b);
                let Some(head) = sim.head_of_line(eap).map(|r| r.id) else {
                    continue;
                };
                let (target, dt) = measure_scheduling_delay(|| dispatcher.decide(sim, eap));
                dispatch_time += dt;
                decisions += 1;
                actions.push(DispatchAction {
                    eap,
                    request: head,
                    target,
                });
            }
            events.push(Event::Dispatched {
                frame,
                slot: sim.state().slot,
            });
            let report = sim.step_slot(&actions)?;
            dispatcher.end_slot(sim, &report);
            if let Some(r) = report.frame_record {
                record = Some(r);
            }
        }
        let mut record = record.expect("frame closes after beta slots");
        record.phi_d_orchestration = orchestration_delay;
        record.phi_d_dispatch = if decisions == 0 {
            0.0
        } else {
            dispatch_time / decisions as f64
        };
        orchestrator.end_frame(sim, &record);
        records.push(record);
    }
    dispatcher.end_episode(sim);
    orchestrator.end_episode(sim);
    let state = sim.state();
    Ok(EpisodeOutcome {
        records,
        events,
        counters: state.episode.clone(),
        residual: state.residual(),
        conservation_held: state.conservation_holds() && state.capacity_invariants_hold(),
    })
}
