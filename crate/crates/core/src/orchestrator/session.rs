use std::collections::{BTreeMap, BTreeSet};

use super::config::{ClockMode, Config};
use super::engine::{AnswerSource, Engine, EngineError, Placement};
use super::wire::{Body, JoinPayload, MetricsSnapshotPayload, Outbound, WireMessage};
use crate::model::{Ms, Participant, ParticipantId, SessionConfig, Utterance};
use crate::telemetry::{compute_metrics_with, EventLog};
use crate::translation::Lexicon;

/// Server-side state of one session, fed one client message at a time.
///
/// Under the virtual clock each client message carries its own time and the
/// session only processes up to the smallest time any present participant has
/// reached, so the outcome does not depend on how the two streams interleave.
/// Under the wall clock messages are stamped with the server's `now`.
pub struct SessionState {
    session_id: String,
    config: Config,
    lexicon: Option<Lexicon>,
    seed: u64,
    clock: ClockMode,
    joined: Vec<JoinPayload>,
    early: Vec<WireMessage>,
    engine: Option<Engine>,
    watermarks: BTreeMap<ParticipantId, Ms>,
    left: BTreeSet<ParticipantId>,
    end_hint: Option<Ms>,
    log: Option<EventLog>,
}

impl SessionState {
    pub fn new(session_id: &str, config: Config, lexicon: Option<Lexicon>, seed: u64) -> Self {
        Self {
            session_id: session_id.to_owned(),
            clock: config.server.clock,
            config,
            lexicon,
            seed,
            joined: Vec::new(),
            early: Vec::new(),
            engine: None,
            watermarks: BTreeMap::new(),
            left: BTreeSet::new(),
            end_hint: None,
            log: None,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn clock(&self) -> ClockMode {
        self.clock
    }

    pub fn is_joined(&self, participant: &ParticipantId) -> bool {
        self.joined.iter().any(|j| j.participant == *participant)
    }

    pub fn is_closed(&self) -> bool {
        self.log.is_some()
    }

    /// The closed log, once every participant has left or one disconnected.
    pub fn closed_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    /// The log as recorded so far.
    pub fn current_log(&self) -> Option<&EventLog> {
        self.log.as_ref().or_else(|| self.engine.as_ref().map(Engine::log))
    }

    fn error(&self, to: Option<&ParticipantId>, t: Option<Ms>, message: impl Into<String>) -> Outbound {
        Outbound {
            to: to.cloned().unwrap_or_else(|| ParticipantId::new("")),
            message: WireMessage {
                participant: to.cloned(),
                ..WireMessage::error(&self.session_id, t, message)
            },
        }
    }

    /// Apply one client message and return the replies. An `Error` reply addressed to
    /// an empty participant id is meant for whichever connection sent the message.
    pub fn handle_message(&mut self, msg: WireMessage, now: Ms, answers: &mut dyn AnswerSource) -> Vec<Outbound> {
        let mut out = Vec::new();
        if msg.session_id != self.session_id {
            out.push(self.error(msg.participant.as_ref(), msg.t, format!("unknown session `{}`", msg.session_id)));
            return out;
        }
        if self.is_closed() {
            out.push(self.error(msg.participant.as_ref(), msg.t, "session closed"));
            return out;
        }
        if let Body::Join(join) = &msg.body {
            self.join(join.clone(), msg.t, answers, &mut out);
            return out;
        }
        let Some(sender) = msg.participant.clone() else {
            out.push(self.error(None, msg.t, "message without participant"));
            return out;
        };
        if !self.is_joined(&sender) {
            out.push(self.error(Some(&sender), msg.t, "join first"));
            return out;
        }
        if self.engine.is_none() {
            self.early.push(msg);
            return out;
        }
        if let Err(message) = self.input(&sender, msg, now, answers, &mut out) {
            out.push(self.error(Some(&sender), Some(now), message));
        }
        out
    }

    fn join(&mut self, join: JoinPayload, t: Option<Ms>, answers: &mut dyn AnswerSource, out: &mut Vec<Outbound>) {
        let who = join.participant.clone();
        if self.is_joined(&who) {
            out.push(self.error(Some(&who), t, "already joined"));
            return;
        }
        if self.joined.len() == 2 {
            out.push(self.error(Some(&who), t, "session full"));
            return;
        }
        self.watermarks.insert(who, 0);
        self.joined.push(join);
        if self.joined.len() < 2 {
            return;
        }
        let session = SessionConfig {
            session_id: self.session_id.clone(),
            participants: self
                .joined
                .iter()
                .map(|j| Participant::new(j.participant.as_str(), j.native_language.as_str(), j.foreign_language.as_str()))
                .collect(),
        };
        let placement = match self.clock {
            ClockMode::Virtual => Placement::Hindsight,
            ClockMode::Wall => Placement::Online,
        };
        match Engine::from_config(session, &self.config, self.lexicon.clone(), placement, self.seed) {
            Ok(engine) => self.engine = Some(engine),
            Err(e) => {
                for j in &self.joined {
                    out.push(self.error(Some(&j.participant), t, format!("cannot start session: {e}")));
                }
                self.joined.pop();
                return;
            }
        }
        for msg in std::mem::take(&mut self.early) {
            let now = msg.t.unwrap_or(0);
            out.extend(self.handle_message(msg, now, answers));
        }
    }

    fn input(
        &mut self,
        sender: &ParticipantId,
        msg: WireMessage,
        now: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), String> {
        let t = match self.clock {
            ClockMode::Virtual => msg.t.ok_or("virtual clock messages need `t`")?,
            ClockMode::Wall => now,
        };
        let engine = self.engine.as_mut().expect("session started");
        if self.clock == ClockMode::Wall {
            engine.run_until(t, answers, out).map_err(|e| e.to_string())?;
        }
        let result: Result<(), EngineError> = match msg.body {
            Body::UtteranceStart(p) => engine.start_utterance(sender, &p.utterance_id, t),
            Body::UtteranceEnd(p) => {
                let utterance = Utterance {
                    id: p.utterance_id,
                    speaker: sender.clone(),
                    language: p.language,
                    text: p.text,
                    capture_start: p.capture_start,
                    capture_end: t,
                    translate_requested: p.translate,
                    practice: p.practice,
                    frame_energies: None,
                };
                engine.end_utterance(utterance)
            }
            Body::VisibilityUpdate(p) => engine.set_override(sender, p.manual_override, t),
            Body::LearningAnswer(p) => match self.clock {
                ClockMode::Wall => engine.submit_answer(sender, &p.prompt_id, &p.answer, t),
                ClockMode::Virtual => return Err(format!("no open prompt `{}`", p.prompt_id)),
            },
            Body::Leave(p) => {
                self.left.insert(sender.clone());
                self.watermarks.insert(sender.clone(), Ms::MAX);
                self.end_hint = self.end_hint.max(p.end_hint);
                Ok(())
            }
            other => return Err(format!("unexpected message type {}", other.type_name())),
        };
        result.map_err(|e| e.to_string())?;
        if self.clock == ClockMode::Virtual {
            let mark = self.watermarks.entry(sender.clone()).or_default();
            *mark = (*mark).max(t);
            self.advance(answers, out).map_err(|e| e.to_string())?;
        }
        if self.left.len() == self.joined.len() {
            self.close(answers, out).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn advance(&mut self, answers: &mut dyn AnswerSource, out: &mut Vec<Outbound>) -> Result<(), EngineError> {
        let bound = self.watermarks.values().copied().min().unwrap_or(0);
        if bound == Ms::MAX {
            return Ok(());
        }
        if let Some(engine) = self.engine.as_mut() {
            engine.run_until(bound, answers, out)?;
        }
        Ok(())
    }

    /// Wall clock only: process everything due before `now`.
    pub fn tick(&mut self, now: Ms, answers: &mut dyn AnswerSource) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.clock == ClockMode::Wall && !self.is_closed() {
            if let Some(engine) = self.engine.as_mut() {
                if let Err(e) = engine.run_until(now, answers, &mut out) {
                    for j in &self.joined {
                        out.push(self.error(Some(&j.participant), Some(now), e.to_string()));
                    }
                }
            }
        }
        out
    }

    /// A lost connection ends the session for everyone.
    pub fn disconnect(&mut self, participant: &ParticipantId, answers: &mut dyn AnswerSource) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.is_closed() || !self.is_joined(participant) {
            return out;
        }
        self.left.insert(participant.clone());
        if let Err(e) = self.close(answers, &mut out) {
            out.push(self.error(None, None, e.to_string()));
        }
        out.retain(|o| o.to != *participant);
        out
    }

    fn close(&mut self, answers: &mut dyn AnswerSource, out: &mut Vec<Outbound>) -> Result<(), EngineError> {
        let Some(mut engine) = self.engine.take() else {
            self.log = Some(EventLog::new(self.session_id.clone()));
            return Ok(());
        };
        let end = engine.finish(self.end_hint, answers, out)?;
        let log = engine.into_log();
        for j in &self.joined {
            let metrics = compute_metrics_with(&log, &j.participant, &self.config.learning.incentive)
                .expect("engine logs replay cleanly");
            out.push(Outbound {
                to: j.participant.clone(),
                message: WireMessage::new(
                    &self.session_id,
                    Some(&j.participant),
                    Some(end),
                    Body::MetricsSnapshot(MetricsSnapshotPayload { metrics, closed: true }),
                ),
            });
        }
        self.log = Some(log);
        Ok(())
    }
}

/// Free-function form of [`SessionState::handle_message`].
pub fn handle_message(
    state: &mut SessionState,
    msg: WireMessage,
    now: Ms,
    answers: &mut dyn AnswerSource,
) -> Vec<Outbound> {
    state.handle_message(msg, now, answers)
}
