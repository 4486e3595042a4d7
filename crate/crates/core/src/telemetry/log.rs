use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{EventDraft, EventKind, Payload, TimelineEvent};
use crate::model::{Ms, ParticipantId, UtteranceId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("event ends before it starts ({t_start} > {t_end})")]
    NegativeDuration { t_start: Ms, t_end: Ms },
    #[error("log closed at {0}; append rejected")]
    Closed(Ms),
    #[error("log already closed")]
    AlreadyClosed,
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Append-only session timeline. Sequence numbers start at 1 and have no gaps.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    session_id: String,
    events: Vec<TimelineEvent>,
    closed_at: Option<Ms>,
}

/// Two logs are equal when they hold the same session and events; whether the
/// session was closed is not part of the persisted form.
impl PartialEq for EventLog {
    fn eq(&self, other: &Self) -> bool {
        self.session_id == other.session_id && self.events == other.events
    }
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            events: Vec::new(),
            closed_at: None,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn events(&self) -> &[TimelineEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn closed_at(&self) -> Option<Ms> {
        self.closed_at
    }

    pub fn iter_kind(&self, kind: EventKind) -> impl Iterator<Item = &TimelineEvent> {
        self.events.iter().filter(move |e| e.kind() == kind)
    }

    fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    pub fn append_event(&mut self, draft: EventDraft) -> Result<u64, LogError> {
        if let Some(end) = self.closed_at {
            return Err(LogError::Closed(end));
        }
        self.push(draft)
    }

    fn push(&mut self, draft: EventDraft) -> Result<u64, LogError> {
        if draft.t_end < draft.t_start {
            return Err(LogError::NegativeDuration {
                t_start: draft.t_start,
                t_end: draft.t_end,
            });
        }
        let seq = self.next_seq();
        self.events.push(TimelineEvent {
            seq,
            session_id: self.session_id.clone(),
            participant: draft.participant,
            utterance_id: draft.utterance_id,
            t_start: draft.t_start,
            t_end: draft.t_end,
            payload: draft.payload,
        });
        Ok(seq)
    }

    pub fn close(&mut self, session_end: Ms) -> Result<(), LogError> {
        if self.closed_at.is_some() {
            return Err(LogError::AlreadyClosed);
        }
        self.closed_at = Some(session_end);
        Ok(())
    }

    /// Append after close, stamped at the close time. Only questionnaire records
    /// take this path.
    pub(crate) fn append_at_close(
        &mut self,
        participant: &ParticipantId,
        payload: Payload,
    ) -> Result<u64, LogError> {
        let end = self.closed_at.unwrap_or_else(|| self.events.iter().map(|e| e.t_end).max().unwrap_or(0));
        self.push(EventDraft::new(participant, None, end, end, payload))
    }

    /// Largest `t_end` in the log.
    pub fn last_time(&self) -> Ms {
        self.events.iter().map(|e| e.t_end).max().unwrap_or(0)
    }

    pub fn participants(&self) -> Vec<ParticipantId> {
        let mut ids: Vec<_> = self.events.iter().map(|e| e.participant.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Build a log from already-sequenced events (used by parsing and tests).
    pub fn from_events(session_id: impl Into<String>, events: Vec<TimelineEvent>) -> Self {
        Self {
            session_id: session_id.into(),
            events,
            closed_at: None,
        }
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    seq: u64,
    session: &'a str,
    kind: EventKind,
    participant: &'a ParticipantId,
    utt: Option<&'a UtteranceId>,
    t_start: Ms,
    t_end: Ms,
    payload: &'a Payload,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    seq: u64,
    session: String,
    kind: EventKind,
    participant: ParticipantId,
    utt: Option<UtteranceId>,
    t_start: Ms,
    t_end: Ms,
    payload: serde_json::Value,
}

/// JSON Lines, one event per line, keys in fixed order.
pub fn serialize_log(log: &EventLog) -> Vec<u8> {
    let mut out = Vec::new();
    write_log(log, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_log<W: Write>(log: &EventLog, mut w: W) -> std::io::Result<()> {
    for e in &log.events {
        let line = LineOut {
            seq: e.seq,
            session: &e.session_id,
            kind: e.kind(),
            participant: &e.participant,
            utt: e.utterance_id.as_ref(),
            t_start: e.t_start,
            t_end: e.t_end,
            payload: &e.payload,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_log(bytes: &[u8]) -> Result<EventLog, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| ParseError { line, message };
        let parsed: LineIn = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let payload = Payload::from_value(parsed.kind, parsed.payload)
            .map_err(|e| err(format!("bad {} payload: {e}", parsed.kind.as_str())))?;
        events.push(TimelineEvent {
            seq: parsed.seq,
            session_id: parsed.session,
            participant: parsed.participant,
            utterance_id: parsed.utt,
            t_start: parsed.t_start,
            t_end: parsed.t_end,
            payload,
        });
    }
    let session_id = events.first().map(|e| e.session_id.clone()).unwrap_or_default();
    Ok(EventLog::from_events(session_id, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Stage;
    use crate::telemetry::event::{StageChange, TranscribedText};

    fn draft(t_start: Ms, t_end: Ms) -> EventDraft {
        EventDraft::new(
            &"alice".into(),
            Some(&"u1".into()),
            t_start,
            t_end,
            Payload::TranscribedText(TranscribedText { text: "hello".into() }),
        )
    }

    #[test]
    fn first_event_gets_seq_one() {
        let mut log = EventLog::new("s");
        assert_eq!(log.append_event(draft(0, 10)).unwrap(), 1);
    }

    #[test]
    fn append_after_close_rejected() {
        let mut log = EventLog::new("s");
        log.append_event(draft(0, 10)).unwrap();
        log.close(100).unwrap();
        assert_eq!(log.append_event(draft(20, 30)), Err(LogError::Closed(100)));
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn thousand_appends_have_no_gaps() {
        let mut log = EventLog::new("s");
        for i in 0..1000 {
            log.append_event(draft(i, i + 1)).unwrap();
        }
        let seqs: Vec<u64> = log.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (1..=1000).collect::<Vec<_>>());
    }

    #[test]
    fn negative_duration_rejected() {
        let mut log = EventLog::new("s");
        assert_eq!(
            log.append_event(draft(10, 5)),
            Err(LogError::NegativeDuration { t_start: 10, t_end: 5 })
        );
    }

    #[test]
    fn empty_log_serializes_to_nothing() {
        assert!(serialize_log(&EventLog::new("s")).is_empty());
        assert!(parse_log(b"").unwrap().is_empty());
    }

    #[test]
    fn key_order_is_fixed() {
        let mut log = EventLog::new("s");
        log.append_event(EventDraft::new(
            &"bob".into(),
            None,
            0,
            5,
            Payload::StageChange(StageChange { stage: Stage::Idle }),
        ))
        .unwrap();
        let text = String::from_utf8(serialize_log(&log)).unwrap();
        assert_eq!(
            text,
            "{\"seq\":1,\"session\":\"s\",\"kind\":\"StageChange\",\"participant\":\"bob\",\"utt\":null,\"t_start\":0,\"t_end\":5,\"payload\":{\"stage\":\"Idle\"}}\n"
        );
        assert_eq!(parse_log(text.as_bytes()).unwrap(), log);
    }

    #[test]
    fn unknown_kind_names_line() {
        let mut log = EventLog::new("s");
        log.append_event(draft(0, 1)).unwrap();
        let mut bytes = serialize_log(&log);
        bytes.extend_from_slice(
            b"{\"seq\":2,\"session\":\"s\",\"kind\":\"Teleport\",\"participant\":\"a\",\"utt\":null,\"t_start\":0,\"t_end\":1,\"payload\":{}}\n",
        );
        let err = parse_log(&bytes).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.to_string().starts_with("line 2:"));
    }

    #[test]
    fn malformed_json_names_line() {
        let err = parse_log(b"\n\n{not json\n").unwrap_err();
        assert_eq!(err.line, 3);
    }
}
