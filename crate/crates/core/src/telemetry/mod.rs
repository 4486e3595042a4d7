//! The append-only session log, its JSON Lines form, and metrics derived from it.

mod event;
mod log;
mod metrics;
mod questionnaire;

pub use event::*;
pub use log::{parse_log, serialize_log, write_log, EventLog, LogError, ParseError};
pub use metrics::{compute_metrics, compute_metrics_with, percent_one_decimal, IncentiveConfig, SessionMetrics};
pub use questionnaire::{
    record_questionnaire, Question, QuestionnaireError, QuestionnaireRecord, LIKERT_MAX, LIKERT_MIN,
};
