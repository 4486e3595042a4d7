//! Shared domain vocabulary: participants, utterances, stages and visibility.

mod stage;
mod timeline;
mod visibility;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stage::{Stage, StageChange, StageError, StageInterval, StageMachine, StageTrigger};
pub use timeline::{replay_stage_intervals, stage_intervals, validate_timeline, StageMap, TimelineError, Violation};
pub use visibility::{visibility_state, Visibility, VisibilityCause, VisibilityTracker};

/// Milliseconds since the session epoch. The only time unit used anywhere.
pub type Ms = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(ParticipantId);
string_id!(UtteranceId);
string_id!(
    /// A language code such as `en` or `fr`.
    Lang
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: ParticipantId,
    pub native_language: Lang,
    pub foreign_language: Lang,
    /// Manual "visible" switch.
    #[serde(default)]
    pub visibility_override: bool,
}

impl Participant {
    pub fn new(id: &str, native: &str, foreign: &str) -> Self {
        Self {
            id: id.into(),
            native_language: native.into(),
            foreign_language: foreign.into(),
            visibility_override: false,
        }
    }
}

/// One captured message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: UtteranceId,
    pub speaker: ParticipantId,
    pub language: Lang,
    pub text: String,
    pub capture_start: Ms,
    pub capture_end: Ms,
    pub translate_requested: bool,
    /// Practice utterances are never presented to the other participant.
    pub practice: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_energies: Option<Vec<f32>>,
}

impl Utterance {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.text.trim().is_empty() {
            return Err(ConfigError::EmptyText(self.id.clone()));
        }
        if self.capture_start >= self.capture_end {
            return Err(ConfigError::EmptyCapture(self.id.clone()));
        }
        Ok(())
    }

    pub fn duration(&self) -> Ms {
        self.capture_end - self.capture_start
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("a session needs exactly two participants, got {0}")]
    ParticipantCount(usize),
    #[error("duplicate participant id `{0}`")]
    DuplicateParticipant(ParticipantId),
    #[error("participant id must be nonempty")]
    EmptyParticipantId,
    #[error("participant `{0}` has identical native and foreign language")]
    SameLanguage(ParticipantId),
    #[error("participants do not have complementary language pairs")]
    LanguageMismatch,
    #[error("utterance `{0}` has empty text")]
    EmptyText(UtteranceId),
    #[error("utterance `{0}` must have capture_start < capture_end")]
    EmptyCapture(UtteranceId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub participants: Vec<Participant>,
}

/// A two-party session at some instant: participants, their stage machines and visibility.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    participants: [Participant; 2],
    stages: BTreeMap<ParticipantId, StageMachine>,
    pub event_count: usize,
}

/// Validate a two-party configuration and open a session at t = 0.
pub fn create_session(config: SessionConfig) -> Result<Session, ConfigError> {
    let [a, b]: [Participant; 2] = config
        .participants
        .try_into()
        .map_err(|v: Vec<Participant>| ConfigError::ParticipantCount(v.len()))?;
    for p in [&a, &b] {
        if p.id.as_str().is_empty() {
            return Err(ConfigError::EmptyParticipantId);
        }
        if p.native_language == p.foreign_language {
            return Err(ConfigError::SameLanguage(p.id.clone()));
        }
    }
    if a.id == b.id {
        return Err(ConfigError::DuplicateParticipant(a.id));
    }
    if a.native_language != b.foreign_language || a.foreign_language != b.native_language {
        return Err(ConfigError::LanguageMismatch);
    }
    let stages = [&a, &b]
        .into_iter()
        .map(|p| (p.id.clone(), StageMachine::new(p.id.clone())))
        .collect();
    Ok(Session {
        id: config.session_id,
        participants: [a, b],
        stages,
        event_count: 0,
    })
}

impl Session {
    pub fn participants(&self) -> &[Participant; 2] {
        &self.participants
    }

    pub fn participant(&self, id: &ParticipantId) -> Option<&Participant> {
        self.participants.iter().find(|p| &p.id == id)
    }

    /// The other participant of a two-party session.
    pub fn partner_of(&self, id: &ParticipantId) -> Option<&Participant> {
        if self.participants[0].id == *id {
            Some(&self.participants[1])
        } else if self.participants[1].id == *id {
            Some(&self.participants[0])
        } else {
            None
        }
    }

    pub fn stage_of(&self, id: &ParticipantId) -> Option<Stage> {
        self.stages.get(id).map(StageMachine::stage)
    }

    pub fn machine(&self, id: &ParticipantId) -> Option<&StageMachine> {
        self.stages.get(id)
    }

    pub fn advance_stage(
        &mut self,
        participant: &ParticipantId,
        trigger: StageTrigger,
        t: Ms,
    ) -> Result<Option<StageChange>, StageError> {
        let machine = self
            .stages
            .get_mut(participant)
            .ok_or_else(|| StageError::UnknownParticipant(participant.clone()))?;
        machine.advance(trigger, t)
    }

    pub fn visibility_override(&self, id: &ParticipantId) -> bool {
        self.participant(id).is_some_and(|p| p.visibility_override)
    }

    pub fn set_visibility_override(&mut self, id: &ParticipantId, on: bool) {
        if let Some(p) = self.participants.iter_mut().find(|p| &p.id == id) {
            p.visibility_override = on;
        }
    }
}
