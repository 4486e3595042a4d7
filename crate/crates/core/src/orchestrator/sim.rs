use thiserror::Error;

use super::config::Config;
use super::engine::{Engine, EngineError, Placement};
use super::trace::{ResolvedTrace, Trace, TraceError};
use super::wire::Outbound;
use crate::learning::SimulatedLearner;
use crate::telemetry::EventLog;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A finished simulation: the closed log and every message the server would have sent.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: EventLog,
    pub outbound: Vec<Outbound>,
}

/// Run a trace end to end under the virtual clock. The same `seed` drives the
/// latency jitter and the simulated learner, so equal inputs give equal logs.
pub fn simulate(trace: &Trace, config: &Config, seed: u64) -> Result<EventLog, SimError> {
    let resolved = trace.resolve(config)?;
    Ok(simulate_resolved(&resolved, config, seed)?.log)
}

pub fn simulate_resolved(trace: &ResolvedTrace, config: &Config, seed: u64) -> Result<SimOutput, SimError> {
    let mut engine = Engine::from_config(
        trace.session.clone(),
        config,
        trace.lexicon.clone(),
        Placement::Hindsight,
        seed,
    )?;
    for u in &trace.utterances {
        engine.submit_utterance(u.clone())?;
    }
    for (participant, t, on) in &trace.overrides {
        engine.set_override(participant, *on, *t)?;
    }
    let mut learner = SimulatedLearner::new(seed, config.learning.learner_accuracy);
    let mut outbound = Vec::new();
    engine.finish(trace.end_hint, &mut learner, &mut outbound)?;
    Ok(SimOutput {
        log: engine.into_log(),
        outbound,
    })
}
