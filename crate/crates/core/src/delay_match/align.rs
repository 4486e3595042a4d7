use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::buffer::{MediaBuffer, MediaKind};
use crate::model::{Ms, ParticipantId, Utterance, UtteranceId};
use crate::translation::{TranslationResult, TranslationSource};

/// How a video/speech duration mismatch is reconciled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AlignPolicy {
    /// Hold the last frame until the translated speech finishes.
    #[default]
    FreezePad,
    /// Cut both to the shorter of the two.
    Trim,
}

/// Delayed original video carrying the translated batch caption and replacement speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedSegment {
    pub utterance_id: UtteranceId,
    pub speaker: ParticipantId,
    pub capture_start: Ms,
    pub capture_end: Ms,
    pub caption_text: String,
    pub source: TranslationSource,
    pub speech_duration_ms: Ms,
    pub video_duration_ms: Ms,
    pub final_duration_ms: Ms,
    pub pad_applied_ms: Ms,
    pub policy: AlignPolicy,
    pub ready_time: Ms,
    pub presentation_start: Option<Ms>,
    pub presentation_end: Option<Ms>,
}

impl SynthesizedSegment {
    pub fn is_scheduled(&self) -> bool {
        self.presentation_start.is_some()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("no {kind:?} segment buffered for `{utterance}`")]
    MissingSegment { utterance: UtteranceId, kind: MediaKind },
    #[error("empty translated text for `{0}`")]
    EmptyTranslation(UtteranceId),
    #[error("translation result belongs to `{got}`, not `{expected}`")]
    Mismatch { expected: UtteranceId, got: UtteranceId },
}

/// `(final, pad)` for the given durations.
pub fn reconcile(video_ms: Ms, speech_ms: Ms, policy: AlignPolicy) -> (Ms, Ms) {
    match policy {
        AlignPolicy::FreezePad => {
            let final_ms = video_ms.max(speech_ms);
            (final_ms, final_ms - video_ms)
        }
        AlignPolicy::Trim => (video_ms.min(speech_ms), 0),
    }
}

/// Combine buffered media with a finished translation into one synthesized segment.
/// The whole translation becomes a single caption and replaces the original audio.
pub fn align(
    utterance: &Utterance,
    buffer: &MediaBuffer,
    translation: &TranslationResult,
    policy: AlignPolicy,
) -> Result<SynthesizedSegment, AlignError> {
    if translation.utterance_id != utterance.id {
        return Err(AlignError::Mismatch {
            expected: utterance.id.clone(),
            got: translation.utterance_id.clone(),
        });
    }
    let segment = |kind| {
        buffer.get(&utterance.id, kind).ok_or_else(|| AlignError::MissingSegment {
            utterance: utterance.id.clone(),
            kind,
        })
    };
    let video = segment(MediaKind::Video)?;
    segment(MediaKind::Audio)?;
    if translation.translated_text.trim().is_empty() {
        return Err(AlignError::EmptyTranslation(utterance.id.clone()));
    }
    let (final_duration_ms, pad_applied_ms) =
        reconcile(video.duration_ms, translation.speech_duration_ms, policy);
    Ok(SynthesizedSegment {
        utterance_id: utterance.id.clone(),
        speaker: utterance.speaker.clone(),
        capture_start: utterance.capture_start,
        capture_end: utterance.capture_end,
        caption_text: translation.translated_text.clone(),
        source: translation.source,
        speech_duration_ms: translation.speech_duration_ms,
        video_duration_ms: video.duration_ms,
        final_duration_ms,
        pad_applied_ms,
        policy,
        ready_time: translation.t_completed,
        presentation_start: None,
        presentation_end: None,
    })
}
