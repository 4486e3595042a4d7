use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Ms, ParticipantId};

/// What a participant is doing at an instant. Waiting and Idle are free time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Speaking,
    Waiting,
    Viewing,
    Learning,
    Idle,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Speaking,
        Stage::Waiting,
        Stage::Viewing,
        Stage::Learning,
        Stage::Idle,
    ];

    /// Higher wins when triggers coincide.
    pub fn priority(self) -> u8 {
        match self {
            Stage::Speaking => 4,
            Stage::Viewing => 3,
            Stage::Learning => 2,
            Stage::Waiting => 1,
            Stage::Idle => 0,
        }
    }

    pub fn is_free(self) -> bool {
        matches!(self, Stage::Waiting | Stage::Idle)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Speaking => "Speaking",
            Stage::Waiting => "Waiting",
            Stage::Viewing => "Viewing",
            Stage::Learning => "Learning",
            Stage::Idle => "Idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageTrigger {
    UtteranceStart,
    UtteranceEnd,
    RemoteUtteranceEnd,
    PresentationStart,
    PresentationEnd,
    LearningShown,
    LearningDone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageInterval {
    pub participant: ParticipantId,
    pub stage: Stage,
    pub t_start: Ms,
    pub t_end: Ms,
}

impl StageInterval {
    pub fn len(&self) -> Ms {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.t_end == self.t_start
    }
}

/// A closed interval plus the stage that replaced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageChange {
    pub closed: StageInterval,
    pub opened: Stage,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StageError {
    #[error("time regression: trigger at {t} before last change at {since}")]
    TimeRegression { t: Ms, since: Ms },
    #[error("{requested:?} rejected while {current:?}")]
    Outranked { current: Stage, requested: Stage },
    #[error("unknown participant `{0}`")]
    UnknownParticipant(ParticipantId),
    #[error("session already closed at {0}")]
    Closed(Ms),
}

/// Per-participant stage state.
///
/// The current stage is a pure function of the activity flags and the number of
/// remote utterances still in the pipeline (captured but not yet fully presented),
/// resolved by `Stage::priority`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMachine {
    participant: ParticipantId,
    speaking: bool,
    viewing: bool,
    learning: bool,
    pipeline: u32,
    stage: Stage,
    since: Ms,
    closed: bool,
}

impl StageMachine {
    pub fn new(participant: ParticipantId) -> Self {
        Self {
            participant,
            speaking: false,
            viewing: false,
            learning: false,
            pipeline: 0,
            stage: Stage::Idle,
            since: 0,
            closed: false,
        }
    }

    pub fn participant(&self) -> &ParticipantId {
        &self.participant
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn since(&self) -> Ms {
        self.since
    }

    pub fn pipeline(&self) -> u32 {
        self.pipeline
    }

    fn resolve(&self) -> Stage {
        if self.speaking {
            Stage::Speaking
        } else if self.viewing {
            Stage::Viewing
        } else if self.learning {
            Stage::Learning
        } else if self.pipeline > 0 {
            Stage::Waiting
        } else {
            Stage::Idle
        }
    }

    fn apply(&mut self, trigger: StageTrigger) {
        match trigger {
            StageTrigger::UtteranceStart => self.speaking = true,
            StageTrigger::UtteranceEnd => self.speaking = false,
            StageTrigger::RemoteUtteranceEnd => self.pipeline += 1,
            StageTrigger::PresentationStart => self.viewing = true,
            StageTrigger::PresentationEnd => {
                self.viewing = false;
                self.pipeline = self.pipeline.saturating_sub(1);
            }
            StageTrigger::LearningShown => self.learning = true,
            StageTrigger::LearningDone => self.learning = false,
        }
    }

    pub fn advance(&mut self, trigger: StageTrigger, t: Ms) -> Result<Option<StageChange>, StageError> {
        self.advance_batch(&[trigger], t)
    }

    /// Apply every trigger that fires at `t` and re-resolve the stage once, so
    /// coinciding triggers produce a single boundary.
    ///
    /// A `LearningShown` that would not become the current stage is rejected
    /// and nothing in the batch is applied.
    pub fn advance_batch(
        &mut self,
        triggers: &[StageTrigger],
        t: Ms,
    ) -> Result<Option<StageChange>, StageError> {
        if self.closed {
            return Err(StageError::Closed(self.since));
        }
        if t < self.since {
            return Err(StageError::TimeRegression { t, since: self.since });
        }
        let mut next = self.clone();
        for trigger in triggers {
            next.apply(*trigger);
        }
        let resolved = next.resolve();
        if triggers.contains(&StageTrigger::LearningShown) && resolved != Stage::Learning {
            return Err(StageError::Outranked {
                current: resolved,
                requested: Stage::Learning,
            });
        }
        *self = next;
        Ok(self.transition(resolved, t))
    }

    fn transition(&mut self, to: Stage, t: Ms) -> Option<StageChange> {
        if to == self.stage {
            return None;
        }
        let closed = StageInterval {
            participant: self.participant.clone(),
            stage: self.stage,
            t_start: self.since,
            t_end: t,
        };
        self.stage = to;
        self.since = t;
        // a change at the instant of the previous one leaves no interval behind
        if closed.is_empty() {
            return None;
        }
        Some(StageChange { closed, opened: to })
    }

    /// Close the final interval at `session_end`.
    pub fn close(&mut self, session_end: Ms) -> Result<Option<StageInterval>, StageError> {
        if session_end < self.since {
            return Err(StageError::TimeRegression {
                t: session_end,
                since: self.since,
            });
        }
        self.closed = true;
        let last = StageInterval {
            participant: self.participant.clone(),
            stage: self.stage,
            t_start: self.since,
            t_end: session_end,
        };
        self.since = session_end;
        Ok((!last.is_empty()).then_some(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine() -> StageMachine {
        StageMachine::new("bob".into())
    }

    #[test]
    fn idle_remote_end_goes_waiting() {
        let mut m = machine();
        let change = m.advance(StageTrigger::RemoteUtteranceEnd, 5000).unwrap().unwrap();
        assert_eq!(change.closed.stage, Stage::Idle);
        assert_eq!((change.closed.t_start, change.closed.t_end), (0, 5000));
        assert_eq!(change.opened, Stage::Waiting);
        assert_eq!(m.since(), 5000);
    }

    #[test]
    fn waiting_presentation_start_goes_viewing() {
        let mut m = machine();
        m.advance(StageTrigger::RemoteUtteranceEnd, 5000).unwrap();
        let change = m.advance(StageTrigger::PresentationStart, 8000).unwrap().unwrap();
        assert_eq!(change.closed.stage, Stage::Waiting);
        assert_eq!(change.opened, Stage::Viewing);
        assert_eq!(m.since(), 8000);
    }

    #[test]
    fn learning_rejected_while_viewing() {
        // RemoteUtteranceEnd@5000, PresentationStart@8000, LearningShown@8100
        let mut m = machine();
        m.advance(StageTrigger::RemoteUtteranceEnd, 5000).unwrap();
        m.advance(StageTrigger::PresentationStart, 8000).unwrap();
        let err = m.advance(StageTrigger::LearningShown, 8100).unwrap_err();
        assert_eq!(
            err,
            StageError::Outranked {
                current: Stage::Viewing,
                requested: Stage::Learning
            }
        );
        assert_eq!(m.stage(), Stage::Viewing);
        assert_eq!(m.since(), 8000);
    }

    #[test]
    fn utterance_end_depends_on_pipeline() {
        let mut m = machine();
        m.advance(StageTrigger::UtteranceStart, 100).unwrap();
        m.advance(StageTrigger::RemoteUtteranceEnd, 200).unwrap();
        assert_eq!(m.stage(), Stage::Speaking);
        m.advance(StageTrigger::UtteranceEnd, 300).unwrap();
        assert_eq!(m.stage(), Stage::Waiting);

        let mut m = machine();
        m.advance(StageTrigger::UtteranceStart, 100).unwrap();
        m.advance(StageTrigger::UtteranceEnd, 300).unwrap();
        assert_eq!(m.stage(), Stage::Idle);
    }

    #[test]
    fn presentation_end_and_learning_done() {
        let mut m = machine();
        m.advance(StageTrigger::RemoteUtteranceEnd, 10).unwrap();
        m.advance(StageTrigger::RemoteUtteranceEnd, 20).unwrap();
        m.advance(StageTrigger::PresentationStart, 30).unwrap();
        m.advance(StageTrigger::PresentationEnd, 40).unwrap();
        assert_eq!(m.stage(), Stage::Waiting);
        m.advance(StageTrigger::LearningShown, 50).unwrap();
        assert_eq!(m.stage(), Stage::Learning);
        m.advance(StageTrigger::LearningDone, 60).unwrap();
        assert_eq!(m.stage(), Stage::Waiting);
        m.advance(StageTrigger::PresentationStart, 70).unwrap();
        m.advance(StageTrigger::PresentationEnd, 80).unwrap();
        assert_eq!(m.stage(), Stage::Idle);
    }

    #[test]
    fn coinciding_triggers_single_boundary() {
        let mut m = machine();
        let change = m
            .advance_batch(
                &[StageTrigger::RemoteUtteranceEnd, StageTrigger::UtteranceStart],
                1000,
            )
            .unwrap()
            .unwrap();
        assert_eq!(change.opened, Stage::Speaking);
        assert_eq!(m.stage(), Stage::Speaking);
        m.advance(StageTrigger::UtteranceEnd, 2000).unwrap();
        assert_eq!(m.stage(), Stage::Waiting);
    }

    #[test]
    fn time_regression_rejected() {
        let mut m = machine();
        m.advance(StageTrigger::UtteranceStart, 1000).unwrap();
        let err = m.advance(StageTrigger::UtteranceEnd, 999).unwrap_err();
        assert_eq!(err, StageError::TimeRegression { t: 999, since: 1000 });
        assert_eq!(m.stage(), Stage::Speaking);
    }

    #[test]
    fn close_emits_final_interval() {
        let mut m = machine();
        let last = m.close(10_000).unwrap().unwrap();
        assert_eq!((last.stage, last.t_start, last.t_end), (Stage::Idle, 0, 10_000));
        assert!(m.advance(StageTrigger::UtteranceStart, 10_001).is_err());
    }
}
