use serde::{Deserialize, Serialize};

use crate::delay_match::AlignPolicy;
use crate::learning::{Direction, PromptKind};
use crate::model::{Lang, Ms, ParticipantId, Stage, UtteranceId, VisibilityCause};
use crate::translation::{FailureReason, TranslationSource};

/// Event kinds. The first five are the conversation-log kinds; the rest are plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    OriginalMedia,
    TranscribedText,
    TranslatedText,
    TranslatedSpeech,
    SynthesizedVideo,
    StageChange,
    VisibilityChange,
    LearningItemShown,
    LearningAnswer,
    TranslationFailed,
    QuestionnaireResponse,
}

impl EventKind {
    /// The five conversation-log kinds, in pipeline order.
    pub const CONVERSATION: [EventKind; 5] = [
        EventKind::OriginalMedia,
        EventKind::TranscribedText,
        EventKind::TranslatedText,
        EventKind::TranslatedSpeech,
        EventKind::SynthesizedVideo,
    ];

    pub fn is_conversation(self) -> bool {
        Self::CONVERSATION.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::OriginalMedia => "OriginalMedia",
            EventKind::TranscribedText => "TranscribedText",
            EventKind::TranslatedText => "TranslatedText",
            EventKind::TranslatedSpeech => "TranslatedSpeech",
            EventKind::SynthesizedVideo => "SynthesizedVideo",
            EventKind::StageChange => "StageChange",
            EventKind::VisibilityChange => "VisibilityChange",
            EventKind::LearningItemShown => "LearningItemShown",
            EventKind::LearningAnswer => "LearningAnswer",
            EventKind::TranslationFailed => "TranslationFailed",
            EventKind::QuestionnaireResponse => "QuestionnaireResponse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub payload_ref: String,
    pub checksum: String,
    pub duration_ms: Ms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalMedia {
    pub receiver: ParticipantId,
    pub language: Lang,
    pub translate_requested: bool,
    pub practice: bool,
    /// Every word is covered by the lexicon in `language`.
    pub well_formed: bool,
    pub video: SegmentRecord,
    pub audio: SegmentRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscribedText {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedText {
    pub text: String,
    pub source: TranslationSource,
    pub src: Lang,
    pub dst: Lang,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedSpeech {
    pub receiver: ParticipantId,
    pub duration_ms: Ms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedVideo {
    pub speaker: ParticipantId,
    pub caption: String,
    pub source: TranslationSource,
    pub video_duration_ms: Ms,
    pub speech_duration_ms: Ms,
    pub final_duration_ms: Ms,
    pub pad_applied_ms: Ms,
    pub policy: AlignPolicy,
    pub ready_time: Ms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageChange {
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityChange {
    pub visible: bool,
    pub cause: Option<VisibilityCause>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningItemShown {
    pub prompt_id: String,
    pub item_id: String,
    pub prompt_kind: PromptKind,
    pub direction: Direction,
    pub native_text: String,
    pub foreign_text: String,
    #[serde(rename = "box")]
    pub box_level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningAnswer {
    /// Absent for practice utterances.
    pub prompt_id: Option<String>,
    /// Absent when the answer could not be matched to any item.
    pub item_id: Option<String>,
    pub answer: String,
    pub similarity: Option<f64>,
    pub correct: Option<bool>,
    pub box_before: Option<u8>,
    pub box_after: Option<u8>,
    pub due_at: Option<Ms>,
}

impl LearningAnswer {
    pub fn is_scored(&self) -> bool {
        self.correct.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationFailed {
    pub reason: FailureReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertAnswer {
    pub question_id: String,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub answers: Vec<LikertAnswer>,
    pub free_text: Option<String>,
}

/// Kind-specific record carried by a [`TimelineEvent`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    OriginalMedia(OriginalMedia),
    TranscribedText(TranscribedText),
    TranslatedText(TranslatedText),
    TranslatedSpeech(TranslatedSpeech),
    SynthesizedVideo(SynthesizedVideo),
    StageChange(StageChange),
    VisibilityChange(VisibilityChange),
    LearningItemShown(LearningItemShown),
    LearningAnswer(LearningAnswer),
    TranslationFailed(TranslationFailed),
    QuestionnaireResponse(QuestionnaireResponse),
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::OriginalMedia(_) => EventKind::OriginalMedia,
            Payload::TranscribedText(_) => EventKind::TranscribedText,
            Payload::TranslatedText(_) => EventKind::TranslatedText,
            Payload::TranslatedSpeech(_) => EventKind::TranslatedSpeech,
            Payload::SynthesizedVideo(_) => EventKind::SynthesizedVideo,
            Payload::StageChange(_) => EventKind::StageChange,
            Payload::VisibilityChange(_) => EventKind::VisibilityChange,
            Payload::LearningItemShown(_) => EventKind::LearningItemShown,
            Payload::LearningAnswer(_) => EventKind::LearningAnswer,
            Payload::TranslationFailed(_) => EventKind::TranslationFailed,
            Payload::QuestionnaireResponse(_) => EventKind::QuestionnaireResponse,
        }
    }

    pub(crate) fn from_value(kind: EventKind, value: serde_json::Value) -> serde_json::Result<Self> {
        use serde_json::from_value as v;
        Ok(match kind {
            EventKind::OriginalMedia => Payload::OriginalMedia(v(value)?),
            EventKind::TranscribedText => Payload::TranscribedText(v(value)?),
            EventKind::TranslatedText => Payload::TranslatedText(v(value)?),
            EventKind::TranslatedSpeech => Payload::TranslatedSpeech(v(value)?),
            EventKind::SynthesizedVideo => Payload::SynthesizedVideo(v(value)?),
            EventKind::StageChange => Payload::StageChange(v(value)?),
            EventKind::VisibilityChange => Payload::VisibilityChange(v(value)?),
            EventKind::LearningItemShown => Payload::LearningItemShown(v(value)?),
            EventKind::LearningAnswer => Payload::LearningAnswer(v(value)?),
            EventKind::TranslationFailed => Payload::TranslationFailed(v(value)?),
            EventKind::QuestionnaireResponse => Payload::QuestionnaireResponse(v(value)?),
        })
    }
}

/// An event before the log assigns it a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub participant: ParticipantId,
    pub utterance_id: Option<UtteranceId>,
    pub t_start: Ms,
    pub t_end: Ms,
    pub payload: Payload,
}

impl EventDraft {
    pub fn new(participant: &ParticipantId, utterance_id: Option<&UtteranceId>, t_start: Ms, t_end: Ms, payload: Payload) -> Self {
        Self {
            participant: participant.clone(),
            utterance_id: utterance_id.cloned(),
            t_start,
            t_end,
            payload,
        }
    }
}

/// One entry of the append-only session log.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    pub seq: u64,
    pub session_id: String,
    pub participant: ParticipantId,
    pub utterance_id: Option<UtteranceId>,
    pub t_start: Ms,
    pub t_end: Ms,
    pub payload: Payload,
}

impl TimelineEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn is(&self, kind: EventKind) -> bool {
        self.kind() == kind
    }
}

macro_rules! payload_accessor {
    ($fn:ident, $variant:ident) => {
        pub fn $fn(&self) -> Option<&$variant> {
            match &self.payload {
                Payload::$variant(p) => Some(p),
                _ => None,
            }
        }
    };
}

impl TimelineEvent {
    payload_accessor!(original_media, OriginalMedia);
    payload_accessor!(transcribed_text, TranscribedText);
    payload_accessor!(translated_text, TranslatedText);
    payload_accessor!(translated_speech, TranslatedSpeech);
    payload_accessor!(synthesized_video, SynthesizedVideo);
    payload_accessor!(stage_change, StageChange);
    payload_accessor!(visibility_change, VisibilityChange);
    payload_accessor!(learning_item_shown, LearningItemShown);
    payload_accessor!(learning_answer, LearningAnswer);
    payload_accessor!(translation_failed, TranslationFailed);
    payload_accessor!(questionnaire_response, QuestionnaireResponse);
}
