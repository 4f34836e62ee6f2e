//! Edge-cloud cluster simulator with learned request dispatch and service
//! orchestration.
//!
//! * [`domain`]: shared types, configuration and metrics records.
//! * [`trace`]: trace CSV ingestion and synthetic arrival patterns.
//! * [`sim`]: the slot-level discrete-event engine.
//! * [`cmmac`]: multi-agent actor-critic dispatch with resource-context masking.
//! * [`gpg`]: graph-encoded stepwise orchestration trained by policy gradient.
//! * [`baselines`]: greedy, random and autoscaler reference schedulers.

pub mod baselines;
pub mod cmmac;
pub mod domain;
pub mod gpg;
pub mod sim;
pub mod trace;
