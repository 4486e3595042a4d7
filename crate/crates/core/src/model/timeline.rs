use std::collections::BTreeMap;

use thiserror::Error;

use super::{Ms, ParticipantId, StageError, StageInterval, StageMachine, StageTrigger, UtteranceId};
use crate::telemetry::{EventKind, EventLog};

/// Stage intervals per participant, each list time-ordered.
pub type StageMap = BTreeMap<ParticipantId, Vec<StageInterval>>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("log is not ordered: seq {seq} follows {previous}")]
    Unordered { seq: u64, previous: u64 },
    #[error("stage replay failed for `{participant}` at {t}: {source}")]
    Replay {
        participant: ParticipantId,
        t: Ms,
        source: StageError,
    },
}

fn check_order(log: &EventLog) -> Result<(), TimelineError> {
    for pair in log.events().windows(2) {
        if pair[1].seq <= pair[0].seq {
            return Err(TimelineError::Unordered {
                seq: pair[1].seq,
                previous: pair[0].seq,
            });
        }
    }
    Ok(())
}

/// Derive every participant's stage partition of `[0, session_end]` by replaying
/// the stage triggers implied by the log's media, presentation and learning events.
///
/// The session end is the log's close time if known, else the latest `t_end`.
pub fn stage_intervals(log: &EventLog) -> Result<StageMap, TimelineError> {
    replay_stage_intervals(log, true)
}

/// As [`stage_intervals`]; with `include_learning = false` learning prompts are
/// ignored, which yields the underlying free stages that prompts are placed into.
pub fn replay_stage_intervals(log: &EventLog, include_learning: bool) -> Result<StageMap, TimelineError> {
    check_order(log)?;
    let session_end = log.closed_at().unwrap_or_else(|| log.last_time());

    let mut triggers: BTreeMap<(Ms, ParticipantId), Vec<StageTrigger>> = BTreeMap::new();
    let mut push = |t: Ms, p: &ParticipantId, trig: StageTrigger| {
        triggers.entry((t, p.clone())).or_default().push(trig);
    };
    for e in log.events() {
        if let Some(media) = e.original_media() {
            push(e.t_start, &e.participant, StageTrigger::UtteranceStart);
            push(e.t_end, &e.participant, StageTrigger::UtteranceEnd);
            if !media.practice {
                push(e.t_end, &media.receiver, StageTrigger::RemoteUtteranceEnd);
            }
        } else if e.is(EventKind::SynthesizedVideo) {
            push(e.t_start, &e.participant, StageTrigger::PresentationStart);
            push(e.t_end, &e.participant, StageTrigger::PresentationEnd);
        } else if include_learning && e.is(EventKind::LearningItemShown) && e.t_end > e.t_start {
            push(e.t_start, &e.participant, StageTrigger::LearningShown);
            push(e.t_end, &e.participant, StageTrigger::LearningDone);
        }
    }

    let mut machines: BTreeMap<ParticipantId, StageMachine> = log
        .participants()
        .into_iter()
        .map(|p| (p.clone(), StageMachine::new(p)))
        .collect();
    let mut out: StageMap = machines.keys().map(|p| (p.clone(), Vec::new())).collect();

    for ((t, participant), batch) in triggers {
        let machine = machines
            .entry(participant.clone())
            .or_insert_with(|| StageMachine::new(participant.clone()));
        let change = machine
            .advance_batch(&batch, t)
            .map_err(|source| TimelineError::Replay {
                participant: participant.clone(),
                t,
                source,
            })?;
        if let Some(change) = change {
            out.entry(participant).or_default().push(change.closed);
        }
    }
    for (participant, machine) in &mut machines {
        let end = session_end.max(machine.since());
        if let Some(last) = machine.close(end).map_err(|source| TimelineError::Replay {
            participant: participant.clone(),
            t: end,
            source,
        })? {
            out.entry(participant.clone()).or_default().push(last);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonMonotonicSeq { seq: u64, previous: u64 },
    EndBeforeStart { seq: u64 },
    StageOverlap { participant: ParticipantId, seq: u64 },
    StageGap { participant: ParticipantId, from: Ms, to: Ms },
    SynthesizedBeforeTranslation { seq: u64, utterance: UtteranceId },
    SynthesizedWithoutTranslation { seq: u64, utterance: UtteranceId },
}

/// Report structural problems in a log. Violations are data, never failures.
pub fn validate_timeline(log: &EventLog) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let events = log.events();

    for pair in events.windows(2) {
        if pair[1].seq <= pair[0].seq {
            violations.push(Violation::NonMonotonicSeq {
                seq: pair[1].seq,
                previous: pair[0].seq,
            });
        }
    }
    for e in events {
        if e.t_end < e.t_start {
            violations.push(Violation::EndBeforeStart { seq: e.seq });
        }
    }

    let mut recorded: BTreeMap<&ParticipantId, Vec<(Ms, Ms, u64)>> = BTreeMap::new();
    for e in log.iter_kind(EventKind::StageChange) {
        recorded.entry(&e.participant).or_default().push((e.t_start, e.t_end, e.seq));
    }
    for (participant, mut intervals) in recorded {
        intervals.sort_unstable();
        let mut cursor = 0;
        for (start, end, seq) in intervals {
            if start < cursor {
                violations.push(Violation::StageOverlap {
                    participant: participant.clone(),
                    seq,
                });
            } else if start > cursor {
                violations.push(Violation::StageGap {
                    participant: participant.clone(),
                    from: cursor,
                    to: start,
                });
            }
            cursor = cursor.max(end);
        }
        if let Some(end) = log.closed_at() {
            if cursor < end {
                violations.push(Violation::StageGap {
                    participant: participant.clone(),
                    from: cursor,
                    to: end,
                });
            }
        }
    }

    let mut translated_at: BTreeMap<&UtteranceId, Ms> = BTreeMap::new();
    for e in events {
        if matches!(e.kind(), EventKind::TranslatedText | EventKind::TranslationFailed) {
            if let Some(utt) = &e.utterance_id {
                translated_at.insert(utt, e.t_end);
            }
        }
    }
    for e in log.iter_kind(EventKind::SynthesizedVideo) {
        let Some(utt) = &e.utterance_id else { continue };
        match translated_at.get(utt) {
            Some(&done) if e.t_start < done => violations.push(Violation::SynthesizedBeforeTranslation {
                seq: e.seq,
                utterance: utt.clone(),
            }),
            Some(_) => {}
            None => violations.push(Violation::SynthesizedWithoutTranslation {
                seq: e.seq,
                utterance: utt.clone(),
            }),
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_match::AlignPolicy;
    use crate::model::Stage;
    use crate::telemetry::{
        EventDraft, OriginalMedia, Payload, SegmentRecord, StageChange, SynthesizedVideo, TranslatedText,
    };
    use crate::translation::TranslationSource;

    fn seg() -> SegmentRecord {
        SegmentRecord {
            payload_ref: "media/u1/video".into(),
            checksum: "00".into(),
            duration_ms: 1500,
        }
    }

    fn media(receiver: &str) -> Payload {
        Payload::OriginalMedia(OriginalMedia {
            receiver: receiver.into(),
            language: "en".into(),
            translate_requested: true,
            practice: false,
            well_formed: true,
            video: seg(),
            audio: seg(),
        })
    }

    fn translated() -> Payload {
        Payload::TranslatedText(TranslatedText {
            text: "bonjour".into(),
            source: TranslationSource::Machine,
            src: "en".into(),
            dst: "fr".into(),
        })
    }

    fn synth() -> Payload {
        Payload::SynthesizedVideo(SynthesizedVideo {
            speaker: "alice".into(),
            caption: "bonjour".into(),
            source: TranslationSource::Machine,
            video_duration_ms: 1500,
            speech_duration_ms: 1500,
            final_duration_ms: 2000,
            pad_applied_ms: 500,
            policy: AlignPolicy::FreezePad,
            ready_time: 4000,
        })
    }

    fn stage(p: &str, s: Stage, a: Ms, b: Ms) -> EventDraft {
        EventDraft::new(&p.into(), None, a, b, Payload::StageChange(StageChange { stage: s }))
    }

    fn spans(v: &[StageInterval]) -> Vec<(Stage, Ms, Ms)> {
        v.iter().map(|i| (i.stage, i.t_start, i.t_end)).collect()
    }

    #[test]
    fn empty_closed_session_is_one_idle_interval() {
        let mut log = EventLog::new("s");
        log.append_event(stage("alice", Stage::Idle, 0, 10_000)).unwrap();
        log.append_event(stage("bob", Stage::Idle, 0, 10_000)).unwrap();
        log.close(10_000).unwrap();
        let map = stage_intervals(&log).unwrap();
        for p in ["alice", "bob"] {
            assert_eq!(spans(&map[&ParticipantId::from(p)]), vec![(Stage::Idle, 0, 10_000)]);
        }
        assert_eq!(validate_timeline(&log), Ok(()));
    }

    #[test]
    fn remote_utterance_then_presentation() {
        // alice speaks [500,2000]; bob views the synthesized segment [4000,6000]
        let mut log = EventLog::new("s");
        let u1 = UtteranceId::from("u1");
        log.append_event(EventDraft::new(&"alice".into(), Some(&u1), 500, 2000, media("bob"))).unwrap();
        log.append_event(EventDraft::new(&"alice".into(), Some(&u1), 2000, 4000, translated())).unwrap();
        log.append_event(EventDraft::new(&"bob".into(), Some(&u1), 4000, 6000, synth())).unwrap();
        log.close(9000).unwrap();
        let map = stage_intervals(&log).unwrap();
        assert_eq!(
            spans(&map[&ParticipantId::from("bob")]),
            vec![
                (Stage::Idle, 0, 2000),
                (Stage::Waiting, 2000, 4000),
                (Stage::Viewing, 4000, 6000),
                (Stage::Idle, 6000, 9000),
            ]
        );
        assert_eq!(
            spans(&map[&ParticipantId::from("alice")]),
            vec![(Stage::Idle, 0, 500), (Stage::Speaking, 500, 2000), (Stage::Idle, 2000, 9000)]
        );
    }

    #[test]
    fn unordered_log_rejected() {
        let mut log = EventLog::new("s");
        log.append_event(stage("bob", Stage::Idle, 0, 10)).unwrap();
        log.append_event(stage("bob", Stage::Idle, 10, 20)).unwrap();
        let mut events = log.events().to_vec();
        events.swap(0, 1);
        let log = EventLog::from_events("s", events);
        assert_eq!(
            stage_intervals(&log),
            Err(TimelineError::Unordered { seq: 1, previous: 2 })
        );
        assert!(matches!(
            validate_timeline(&log).unwrap_err()[0],
            Violation::NonMonotonicSeq { seq: 1, previous: 2 }
        ));
    }

    #[test]
    fn end_before_start_listed() {
        let mut log = EventLog::new("s");
        log.append_event(stage("bob", Stage::Idle, 0, 10)).unwrap();
        let mut events = log.events().to_vec();
        events[0].t_end = 0;
        events[0].t_start = 5;
        let log = EventLog::from_events("s", events);
        let v = validate_timeline(&log).unwrap_err();
        assert!(v.contains(&Violation::EndBeforeStart { seq: 1 }));
    }

    #[test]
    fn synthesized_before_translation_listed() {
        let mut log = EventLog::new("s");
        let u1 = UtteranceId::from("u1");
        log.append_event(EventDraft::new(&"alice".into(), Some(&u1), 0, 1000, media("bob"))).unwrap();
        log.append_event(EventDraft::new(&"alice".into(), Some(&u1), 1000, 3000, translated())).unwrap();
        log.append_event(EventDraft::new(&"bob".into(), Some(&u1), 2500, 4500, synth())).unwrap();
        let v = validate_timeline(&log).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::SynthesizedBeforeTranslation {
                seq: 3,
                utterance: u1
            }]
        );
    }

    #[test]
    fn stage_overlap_and_gap_listed() {
        let mut log = EventLog::new("s");
        log.append_event(stage("bob", Stage::Idle, 0, 100)).unwrap();
        log.append_event(stage("bob", Stage::Waiting, 50, 200)).unwrap();
        log.append_event(stage("bob", Stage::Idle, 300, 400)).unwrap();
        let v = validate_timeline(&log).unwrap_err();
        assert!(v.contains(&Violation::StageOverlap {
            participant: "bob".into(),
            seq: 2
        }));
        assert!(v.contains(&Violation::StageGap {
            participant: "bob".into(),
            from: 200,
            to: 300
        }));
    }
}
