use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::grade::normalize;
use crate::model::{Ms, ParticipantId, UtteranceId};
use crate::telemetry::{EventKind, EventLog, OriginalMedia, TranslatedText};
use crate::translation::{TranslationSource, UNKNOWN_OPEN};

/// Whether the participant received or sent the source message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Received,
    Sent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    Review,
    Retell,
    Recognize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub t: Ms,
    pub correct: bool,
}

/// A bilingual prompt harvested from conversation history, with its Leitner state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningItem {
    pub id: String,
    pub owner: ParticipantId,
    pub source_utterance_id: UtteranceId,
    pub direction: Direction,
    pub prompt_kind: PromptKind,
    pub native_text: String,
    pub foreign_text: String,
    #[serde(rename = "box")]
    pub box_level: u8,
    pub due_at: Ms,
    pub history: Vec<Attempt>,
}

impl LearningItem {
    pub fn item_id(owner: &ParticipantId, utterance: &UtteranceId) -> String {
        format!("{owner}:{utterance}")
    }
}

struct UtteranceFacts<'a> {
    speaker: &'a ParticipantId,
    media: &'a OriginalMedia,
    transcript: Option<&'a str>,
    translation: Option<(&'a TranslatedText, Ms)>,
    presented_until: Option<Ms>,
}

/// One Review item per machine-translated message the participant received (and saw)
/// or sent. Received items surface when their presentation ends, sent items when the
/// translation completes. The partner's practice utterances never yield items; the
/// participant's own do. Translations with words missing from the lexicon are
/// skipped. Items with the same foreign text collapse onto the earliest.
pub fn harvest_items(log: &EventLog, participant: &ParticipantId) -> Vec<LearningItem> {
    let mut facts: BTreeMap<&UtteranceId, UtteranceFacts> = BTreeMap::new();
    for e in log.events() {
        let (Some(utt), Some(media)) = (&e.utterance_id, e.original_media()) else { continue };
        facts.insert(
            utt,
            UtteranceFacts {
                speaker: &e.participant,
                media,
                transcript: None,
                translation: None,
                presented_until: None,
            },
        );
    }
    for e in log.events() {
        let Some(f) = e.utterance_id.as_ref().and_then(|u| facts.get_mut(u)) else { continue };
        match e.kind() {
            EventKind::TranscribedText => f.transcript = e.transcribed_text().map(|t| t.text.as_str()),
            EventKind::TranslatedText => f.translation = e.translated_text().map(|t| (t, e.t_end)),
            EventKind::SynthesizedVideo if e.participant == *participant => f.presented_until = Some(e.t_end),
            _ => {}
        }
    }

    // (available_at, rank, utterance) orders candidates; rank puts presentation ends
    // ahead of translation completions at the same instant
    let mut candidates: Vec<((Ms, u8, &UtteranceId), LearningItem)> = Vec::new();
    for (utt, f) in &facts {
        let (Some(transcript), Some((translation, translated_at))) = (f.transcript, f.translation) else {
            continue;
        };
        if translation.source != TranslationSource::Machine {
            continue;
        }
        if translation.text.contains(UNKNOWN_OPEN) {
            continue;
        }
        let (direction, native, foreign, available, rank) = if f.speaker == participant && f.media.practice {
            // practice is spoken in the foreign language and translated back
            (Direction::Sent, translation.text.as_str(), transcript, translated_at, 1)
        } else if f.speaker == participant {
            (Direction::Sent, transcript, translation.text.as_str(), translated_at, 1)
        } else if f.media.receiver == *participant && !f.media.practice {
            let Some(until) = f.presented_until else { continue };
            (Direction::Received, translation.text.as_str(), transcript, until, 0)
        } else {
            continue;
        };
        candidates.push((
            (available, rank, utt),
            LearningItem {
                id: LearningItem::item_id(participant, utt),
                owner: participant.clone(),
                source_utterance_id: (*utt).clone(),
                direction,
                prompt_kind: PromptKind::Review,
                native_text: native.to_owned(),
                foreign_text: foreign.to_owned(),
                box_level: 1,
                due_at: available,
                history: Vec::new(),
            },
        ));
    }
    candidates.sort_by(|a, b| a.0.cmp(&b.0));
    let mut seen = BTreeSet::new();
    candidates
        .into_iter()
        .filter(|(_, item)| seen.insert(normalize(&item.foreign_text)))
        .map(|(_, item)| item)
        .collect()
}
