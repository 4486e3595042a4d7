#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use talklearn_core::model::{Ms, ParticipantId, Stage, StageInterval};
use talklearn_core::orchestrator::{random_trace, Config, RandomTraceParams, Trace};
use talklearn_core::telemetry::{EventKind, EventLog};
use talklearn_core::translation::Lexicon;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn lexicon() -> Lexicon {
    Lexicon::load(&data_dir().join("lexicon-en-fr.json"), "en".into(), "fr".into()).unwrap()
}

pub fn trace(seed: u64) -> Trace {
    random_trace(seed, &lexicon(), &RandomTraceParams::default())
}

pub fn config() -> Config {
    Config::default()
}

/// StageChange events as recorded by the engine, per participant and time-ordered.
pub fn recorded_stages(log: &EventLog) -> BTreeMap<ParticipantId, Vec<StageInterval>> {
    let mut out: BTreeMap<ParticipantId, Vec<StageInterval>> = BTreeMap::new();
    for e in log.iter_kind(EventKind::StageChange) {
        out.entry(e.participant.clone()).or_default().push(StageInterval {
            participant: e.participant.clone(),
            stage: e.stage_change().unwrap().stage,
            t_start: e.t_start,
            t_end: e.t_end,
        });
    }
    for list in out.values_mut() {
        list.sort_by_key(|i| (i.t_start, i.t_end));
    }
    out
}

pub fn intervals_of(list: &[StageInterval], stages: &[Stage]) -> Vec<(Ms, Ms)> {
    list.iter()
        .filter(|i| stages.contains(&i.stage))
        .map(|i| (i.t_start, i.t_end))
        .collect()
}

pub fn overlaps(a: (Ms, Ms), b: (Ms, Ms)) -> bool {
    a.0 < b.1 && b.0 < a.1
}
