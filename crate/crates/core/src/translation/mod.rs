//! Transcription, translation and speech-synthesis backends.

mod lexicon;
mod mock;
mod remote;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{Lexicon, LexiconError};
pub use mock::{
    latency, synthesize_speech, transcribe, translate, Jitter, LatencyModel, SpeechError, TranslateError,
    MIN_SPEECH_MS, UNKNOWN_CLOSE, UNKNOWN_OPEN,
};
pub use remote::{RemoteBackend, RemoteRequest};

use crate::model::{Lang, Ms, Utterance, UtteranceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TranslationSource {
    Machine,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    Malformed,
    Status,
    Unreachable,
    UnsupportedPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("translation failed ({reason:?}): {detail}")]
pub struct TranslationFailure {
    pub reason: FailureReason,
    pub detail: String,
}

impl TranslationFailure {
    pub fn new(reason: FailureReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub utterance_id: UtteranceId,
    pub transcribed_text: String,
    pub translated_text: String,
    pub speech_duration_ms: Ms,
    pub source: TranslationSource,
    pub t_requested: Ms,
    pub t_completed: Ms,
}

/// Something that turns text in one language into another. Implementations are
/// called from the session owner and must be shareable across workers.
pub trait TranslationBackend: Send + Sync {
    fn translate(&self, text: &str, src: &Lang, dst: &Lang) -> Result<String, TranslationFailure>;
}

/// Deterministic lexicon-backed machine translation.
#[derive(Debug, Clone)]
pub struct MockBackend {
    lexicon: Lexicon,
}

impl MockBackend {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl TranslationBackend for MockBackend {
    fn translate(&self, text: &str, src: &Lang, dst: &Lang) -> Result<String, TranslationFailure> {
        translate(text, src, dst, &self.lexicon)
            .map_err(|e| TranslationFailure::new(FailureReason::UnsupportedPair, e.to_string()))
    }
}

/// Outcome of pushing one utterance through transcription, translation and speech synthesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOutput {
    pub result: TranslationResult,
    pub failure: Option<TranslationFailure>,
}

/// The full per-utterance pipeline with its latency model and seeded jitter stream.
pub struct TranslationPipeline {
    backend: Box<dyn TranslationBackend>,
    latency: LatencyModel,
    speech_rate_ms_per_char: Ms,
    rng: ChaCha8Rng,
}

impl TranslationPipeline {
    pub fn new(backend: Box<dyn TranslationBackend>, latency: LatencyModel, speech_rate_ms_per_char: Ms, seed: u64) -> Self {
        Self {
            backend,
            latency,
            speech_rate_ms_per_char: speech_rate_ms_per_char.max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn speech_rate(&self) -> Ms {
        self.speech_rate_ms_per_char
    }

    /// Run an utterance whose capture ended at `utterance.capture_end`.
    ///
    /// Untranslated utterances pass through with no added latency and keep their
    /// original audio. A failed translation falls back to the original text and
    /// audio, still completing at the modelled latency.
    pub fn process(&mut self, utterance: &Utterance, dst: &Lang) -> PipelineOutput {
        let transcribed = transcribe(utterance);
        let requested = utterance.capture_end;
        if !utterance.translate_requested {
            return PipelineOutput {
                result: TranslationResult {
                    utterance_id: utterance.id.clone(),
                    translated_text: transcribed.clone(),
                    transcribed_text: transcribed,
                    speech_duration_ms: utterance.duration(),
                    source: TranslationSource::None,
                    t_requested: requested,
                    t_completed: requested,
                },
                failure: None,
            };
        }
        let delay = latency(&self.latency, &transcribed, &mut self.rng);
        let outcome = self
            .backend
            .translate(&transcribed, &utterance.language, dst)
            .and_then(|text| {
                if text.trim().is_empty() {
                    Err(TranslationFailure::new(FailureReason::Malformed, "empty translation"))
                } else {
                    Ok(text)
                }
            });
        let (translated_text, speech_duration_ms, source, failure) = match outcome {
            Ok(text) => {
                let speech = synthesize_speech(&text, self.speech_rate_ms_per_char).unwrap_or(MIN_SPEECH_MS);
                (text, speech, TranslationSource::Machine, None)
            }
            Err(f) => (transcribed.clone(), utterance.duration(), TranslationSource::None, Some(f)),
        };
        PipelineOutput {
            result: TranslationResult {
                utterance_id: utterance.id.clone(),
                transcribed_text: transcribed,
                translated_text,
                speech_duration_ms,
                source,
                t_requested: requested,
                t_completed: requested + delay,
            },
            failure,
        }
    }
}
