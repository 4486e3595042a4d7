use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EventLog, LikertAnswer, LogError, Payload, QuestionnaireResponse};
use crate::model::ParticipantId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub participant: ParticipantId,
    pub answers: Vec<LikertAnswer>,
    #[serde(default)]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuestionnaireError {
    #[error("answer to `{question_id}` is {value}, outside 1..=5")]
    OutOfRange { question_id: String, value: u8 },
    #[error(transparent)]
    Log(#[from] LogError),
}

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Store a questionnaire as a `QuestionnaireResponse` event stamped at session close.
pub fn record_questionnaire(log: &mut EventLog, record: &QuestionnaireRecord) -> Result<u64, QuestionnaireError> {
    if let Some(bad) = record.answers.iter().find(|a| !(LIKERT_MIN..=LIKERT_MAX).contains(&a.value)) {
        return Err(QuestionnaireError::OutOfRange {
            question_id: bad.question_id.clone(),
            value: bad.value,
        });
    }
    let free_text = record.free_text.as_ref().filter(|t| !t.trim().is_empty()).cloned();
    let payload = Payload::QuestionnaireResponse(QuestionnaireResponse {
        answers: record.answers.clone(),
        free_text,
    });
    Ok(log.append_at_close(&record.participant, payload)?)
}
