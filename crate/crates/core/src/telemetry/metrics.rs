use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EventLog;
use crate::model::{stage_intervals, Ms, ParticipantId, Stage, TimelineError};
use crate::translation::TranslationSource;

/// Parameters of the translation-fee discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncentiveConfig {
    pub weight: f64,
    pub cap: f64,
}

impl Default for IncentiveConfig {
    fn default() -> Self {
        Self { weight: 0.5, cap: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub participant: ParticipantId,
    pub messages_sent: u64,
    pub untranslated_pct: f64,
    pub machine_pct: f64,
    pub stage_durations: BTreeMap<Stage, Ms>,
    pub free_time_ms: Ms,
    pub learning_items_attempted: u64,
    pub learning_accuracy: f64,
    pub discount_ratio: f64,
}

/// `100 × num / den` rounded half-up to one decimal using integer arithmetic; 0 when
/// `den` is 0.
pub fn percent_one_decimal(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let tenths = (2000 * num + den) / (2 * den);
    tenths as f64 / 10.0
}

pub fn compute_metrics(log: &EventLog, participant: &ParticipantId) -> Result<SessionMetrics, TimelineError> {
    compute_metrics_with(log, participant, &IncentiveConfig::default())
}

/// Message percentages count the participant's non-practice utterances only.
pub fn compute_metrics_with(
    log: &EventLog,
    participant: &ParticipantId,
    incentive: &IncentiveConfig,
) -> Result<SessionMetrics, TimelineError> {
    let mut sources = BTreeMap::new();
    for e in log.events() {
        if let (Some(utt), Some(t)) = (&e.utterance_id, e.translated_text()) {
            sources.insert(utt, t.source);
        }
    }

    let (mut sent, mut untranslated, mut machine, mut well_formed_untranslated) = (0, 0, 0, 0);
    for e in log.events().iter().filter(|e| e.participant == *participant) {
        let Some(media) = e.original_media() else { continue };
        if media.practice {
            continue;
        }
        sent += 1;
        if !media.translate_requested {
            untranslated += 1;
            if media.well_formed {
                well_formed_untranslated += 1;
            }
        }
        let utt = e.utterance_id.as_ref();
        if utt.and_then(|u| sources.get(u)) == Some(&TranslationSource::Machine) {
            machine += 1;
        }
    }

    let mut stage_durations: BTreeMap<Stage, Ms> = Stage::ALL.iter().map(|s| (*s, 0)).collect();
    if let Some(intervals) = stage_intervals(log)?.get(participant) {
        for i in intervals {
            *stage_durations.entry(i.stage).or_default() += i.len();
        }
    }
    let free_time_ms = stage_durations[&Stage::Waiting] + stage_durations[&Stage::Idle];

    let (mut attempted, mut correct) = (0, 0);
    for e in log.events().iter().filter(|e| e.participant == *participant) {
        let Some(answer) = e.learning_answer() else { continue };
        if answer.prompt_id.is_none() || !answer.is_scored() {
            continue;
        }
        attempted += 1;
        if answer.correct == Some(true) {
            correct += 1;
        }
    }

    let discount_ratio = if sent == 0 {
        0.0
    } else {
        (incentive.weight * well_formed_untranslated as f64 / sent as f64).min(incentive.cap)
    };

    Ok(SessionMetrics {
        participant: participant.clone(),
        messages_sent: sent,
        untranslated_pct: percent_one_decimal(untranslated, sent),
        machine_pct: percent_one_decimal(machine, sent),
        stage_durations,
        free_time_ms,
        learning_items_attempted: attempted,
        learning_accuracy: percent_one_decimal(correct, attempted),
        discount_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(percent_one_decimal(1, 4), 25.0);
        assert_eq!(percent_one_decimal(3, 4), 75.0);
        assert_eq!(percent_one_decimal(1, 3), 33.3);
        assert_eq!(percent_one_decimal(2, 3), 66.7);
        assert_eq!(percent_one_decimal(1, 8), 12.5);
        assert_eq!(percent_one_decimal(1, 16), 6.3);
        assert_eq!(percent_one_decimal(0, 0), 0.0);
        assert_eq!(percent_one_decimal(7, 7), 100.0);
    }
}
