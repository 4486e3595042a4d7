use serde::{Deserialize, Serialize};

use super::item::{Attempt, LearningItem};
use crate::delay_match::FreeWindow;
use crate::model::Ms;
use crate::translation::{synthesize_speech, MIN_SPEECH_MS};

pub const MIN_BOX: u8 = 1;
pub const MAX_BOX: u8 = 5;

/// Review interval after landing in `box_level`.
pub fn interval(box_level: u8) -> Ms {
    match box_level.clamp(MIN_BOX, MAX_BOX) {
        1 => 60_000,
        2 => 5 * 60_000,
        3 => 30 * 60_000,
        4 => 2 * 3_600_000,
        _ => 24 * 3_600_000,
    }
}

/// Promote on a correct answer (capped at box 5), reset to box 1 otherwise.
pub fn update_box(item: &LearningItem, correct: bool, now: Ms) -> LearningItem {
    let mut next = item.clone();
    next.box_level = if correct {
        (item.box_level + 1).min(MAX_BOX)
    } else {
        MIN_BOX
    };
    next.due_at = now + interval(next.box_level);
    next.history.push(Attempt { t: now, correct });
    next
}

/// How long one exercise is expected to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseTiming {
    pub speech_rate_ms_per_char: Ms,
    pub answer_allowance_ms: Ms,
}

impl Default for ExerciseTiming {
    fn default() -> Self {
        Self {
            speech_rate_ms_per_char: 60,
            answer_allowance_ms: 2000,
        }
    }
}

impl ExerciseTiming {
    pub fn estimate(&self, item: &LearningItem) -> Ms {
        synthesize_speech(&item.foreign_text, self.speech_rate_ms_per_char).unwrap_or(MIN_SPEECH_MS)
            + self.answer_allowance_ms
    }
}

fn queue_order(a: &LearningItem, b: &LearningItem) -> std::cmp::Ordering {
    (a.due_at, a.box_level, &a.id).cmp(&(b.due_at, b.box_level, &b.id))
}

/// Earliest-due item (lower box first on ties) whose exercise fits in what is left of
/// `window` after `now`.
pub fn pick_item<'a>(
    queue: &'a [LearningItem],
    window: &FreeWindow,
    now: Ms,
    timing: &ExerciseTiming,
) -> Option<&'a LearningItem> {
    let start = now.max(window.t_start);
    let remaining = window.t_end.saturating_sub(start);
    queue
        .iter()
        .filter(|item| item.due_at <= start && timing.estimate(item) <= remaining)
        .min_by(|a, b| queue_order(a, b))
}

/// The earliest instant after `now` at which some item not yet due becomes due and
/// would still fit in `window`.
pub fn next_due(queue: &[LearningItem], window: &FreeWindow, now: Ms, timing: &ExerciseTiming) -> Option<Ms> {
    queue
        .iter()
        .filter(|item| item.due_at > now && item.due_at + timing.estimate(item) <= window.t_end)
        .map(|item| item.due_at)
        .min()
}
