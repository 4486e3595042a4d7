use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grade::{grade_text, normalize};
use super::item::{harvest_items, LearningItem};
use crate::model::ParticipantId;
use crate::telemetry::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    Retell,
    Recognize,
}

/// One test question. Retell shows the native text and expects the foreign sentence
/// spoken back; Recognize shows the native text and expects the matching foreign
/// sentence to be picked among `choices`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub kind: TestKind,
    pub native_text: String,
    pub foreign_text: String,
    pub expected: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTest {
    pub id: String,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<ParticipantId>,
    pub seed: u64,
    pub items: Vec<TestItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub kind: TestKind,
    pub answer: Option<String>,
    pub similarity: Option<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub participant: Option<ParticipantId>,
    pub n_retold: usize,
    pub n_recognized: usize,
    pub scores: Vec<ItemScore>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuizError {
    #[error("insufficient material: need {needed} distinct sentences, log has {available}")]
    InsufficientMaterial { needed: usize, available: usize },
}

pub const RECOGNIZE_CHOICES: usize = 4;

/// Distinct translated sentences in the log, for one participant or for everyone.
/// Each utterance counts once, whichever side of it is kept.
pub fn test_material(log: &EventLog, participant: Option<&ParticipantId>) -> Vec<LearningItem> {
    let owners: Vec<ParticipantId> = match participant {
        Some(p) => vec![p.clone()],
        None => log.participants(),
    };
    let mut utterances = BTreeSet::new();
    let mut texts = BTreeSet::new();
    let mut pool: Vec<LearningItem> = owners
        .iter()
        .flat_map(|p| harvest_items(log, p))
        .filter(|item| {
            let mut pair = [normalize(&item.native_text), normalize(&item.foreign_text)];
            pair.sort();
            utterances.insert(item.source_utterance_id.clone()) & texts.insert(pair)
        })
        .collect();
    pool.sort_by(|a, b| (&a.foreign_text, &a.id).cmp(&(&b.foreign_text, &b.id)));
    pool
}

/// Seeded sample of `n_items` sentences, alternating Retell and Recognize.
pub fn build_language_test(
    log: &EventLog,
    n_items: usize,
    seed: u64,
    participant: Option<&ParticipantId>,
) -> Result<LanguageTest, QuizError> {
    let pool = test_material(log, participant);
    let needed = if n_items >= 2 {
        n_items.max(RECOGNIZE_CHOICES)
    } else {
        n_items
    };
    if pool.len() < needed {
        return Err(QuizError::InsufficientMaterial {
            needed,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, pool.len(), n_items).into_vec();
    let items = picks
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let source = &pool[i];
            let kind = if k % 2 == 0 { TestKind::Retell } else { TestKind::Recognize };
            let choices = match kind {
                TestKind::Retell => Vec::new(),
                TestKind::Recognize => {
                    // distractors in the same language as the answer when there are enough
                    let same: Vec<usize> = (0..pool.len())
                        .filter(|&j| j != i && pool[j].owner == source.owner)
                        .collect();
                    let others: Vec<usize> = if same.len() >= RECOGNIZE_CHOICES - 1 {
                        same
                    } else {
                        (0..pool.len()).filter(|&j| j != i).collect()
                    };
                    let mut choices: Vec<String> = index::sample(&mut rng, others.len(), RECOGNIZE_CHOICES - 1)
                        .into_iter()
                        .map(|j| pool[others[j]].foreign_text.clone())
                        .collect();
                    choices.push(source.foreign_text.clone());
                    choices.shuffle(&mut rng);
                    choices
                }
            };
            TestItem {
                kind,
                native_text: source.native_text.clone(),
                foreign_text: source.foreign_text.clone(),
                expected: source.foreign_text.clone(),
                choices,
            }
        })
        .collect();
    let who = participant.map_or("all", |p| p.as_str());
    Ok(LanguageTest {
        id: format!("test-{}-{who}-{seed}", log.session_id()),
        session_id: log.session_id().to_owned(),
        participant: participant.cloned(),
        seed,
        items,
    })
}

/// Retell answers are graded by similarity, Recognize answers by exact (normalized)
/// choice equality. Missing answers count as incorrect.
pub fn score_test(test: &LanguageTest, answers: &[Option<String>], threshold: f64) -> TestResult {
    let scores: Vec<ItemScore> = test
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let answer = answers.get(i).cloned().flatten();
            let (similarity, correct) = match (&answer, item.kind) {
                (None, _) => (None, false),
                (Some(a), TestKind::Retell) => {
                    let g = grade_text(&item.expected, a, threshold);
                    (Some(g.similarity), g.correct)
                }
                (Some(a), TestKind::Recognize) => (None, normalize(a) == normalize(&item.expected)),
            };
            ItemScore {
                kind: item.kind,
                answer,
                similarity,
                correct,
            }
        })
        .collect();
    let count = |kind| scores.iter().filter(|s| s.kind == kind && s.correct).count();
    TestResult {
        test_id: test.id.clone(),
        participant: test.participant.clone(),
        n_retold: count(TestKind::Retell),
        n_recognized: count(TestKind::Recognize),
        scores,
    }
}
