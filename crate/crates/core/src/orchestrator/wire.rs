use serde::{Deserialize, Serialize};

use crate::learning::{Direction, PromptKind};
use crate::model::{Lang, Ms, ParticipantId, Stage, UtteranceId, VisibilityCause};
use crate::telemetry::SessionMetrics;
use crate::translation::TranslationSource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinPayload {
    pub participant: ParticipantId,
    pub native_language: Lang,
    pub foreign_language: Lang,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceStartPayload {
    pub utterance_id: UtteranceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEndPayload {
    pub utterance_id: UtteranceId,
    pub text: String,
    pub language: Lang,
    pub translate: bool,
    #[serde(default)]
    pub practice: bool,
    /// Capture start as the client saw it; the server keeps its own record.
    pub capture_start: Ms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPayload {
    pub utterance_id: UtteranceId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedStartPayload {
    pub utterance_id: UtteranceId,
    pub speaker: ParticipantId,
    /// Reference to the synthesized segment, never to the original capture.
    pub segment_ref: String,
    pub duration_ms: Ms,
    pub source: TranslationSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedEndPayload {
    pub utterance_id: UtteranceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageUpdatePayload {
    pub stage: Stage,
}

/// Server to client: the recipient's visibility. Client to server: a manual
/// override request, carried in `manual_override`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityPayload {
    pub visible: bool,
    pub cause: Option<VisibilityCause>,
    pub manual_override: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxReason {
    RemoteSpeaking,
    Translating,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxiliaryPicturePayload {
    pub reason: AuxReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningPromptPayload {
    pub prompt_id: String,
    pub item_id: String,
    pub prompt_kind: PromptKind,
    pub direction: Direction,
    pub native_text: String,
    pub foreign_text: String,
    #[serde(rename = "box")]
    pub box_level: u8,
    pub t_start: Ms,
    pub t_end: Ms,
}

/// Client to server: `prompt_id` and `answer`. Server to client adds the grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningAnswerPayload {
    pub prompt_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    pub box_level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshotPayload {
    pub metrics: SessionMetrics,
    /// Set on the last message of a session.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeavePayload {
    /// Requested session end; the server never ends before activity settles.
    #[serde(default)]
    pub end_hint: Option<Ms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum Body {
    Join(JoinPayload),
    UtteranceStart(UtteranceStartPayload),
    UtteranceEnd(UtteranceEndPayload),
    Caption(CaptionPayload),
    SynthesizedStart(SynthesizedStartPayload),
    SynthesizedEnd(SynthesizedEndPayload),
    StageUpdate(StageUpdatePayload),
    VisibilityUpdate(VisibilityPayload),
    AuxiliaryPicture(AuxiliaryPicturePayload),
    LearningPrompt(LearningPromptPayload),
    LearningAnswer(LearningAnswerPayload),
    MetricsSnapshot(MetricsSnapshotPayload),
    Error(ErrorPayload),
    Leave(LeavePayload),
}

impl Body {
    pub fn type_name(&self) -> &'static str {
        match self {
            Body::Join(_) => "Join",
            Body::UtteranceStart(_) => "UtteranceStart",
            Body::UtteranceEnd(_) => "UtteranceEnd",
            Body::Caption(_) => "Caption",
            Body::SynthesizedStart(_) => "SynthesizedStart",
            Body::SynthesizedEnd(_) => "SynthesizedEnd",
            Body::StageUpdate(_) => "StageUpdate",
            Body::VisibilityUpdate(_) => "VisibilityUpdate",
            Body::AuxiliaryPicture(_) => "AuxiliaryPicture",
            Body::LearningPrompt(_) => "LearningPrompt",
            Body::LearningAnswer(_) => "LearningAnswer",
            Body::MetricsSnapshot(_) => "MetricsSnapshot",
            Body::Error(_) => "Error",
            Body::Leave(_) => "Leave",
        }
    }
}

/// One framed JSON message. `participant` names the sender on client messages and
/// the recipient on server messages; `t` is the sender's clock (virtual or wall ms
/// since session start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<ParticipantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Ms>,
    #[serde(flatten)]
    pub body: Body,
}

impl WireMessage {
    pub fn new(session_id: &str, participant: Option<&ParticipantId>, t: Option<Ms>, body: Body) -> Self {
        Self {
            session_id: session_id.to_owned(),
            participant: participant.cloned(),
            t,
            body,
        }
    }

    pub fn error(session_id: &str, t: Option<Ms>, message: impl Into<String>) -> Self {
        Self::new(session_id, None, t, Body::Error(ErrorPayload { message: message.into() }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// A server message addressed to one participant.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: ParticipantId,
    pub message: WireMessage,
}
