//! Learning during waits: item harvest, Leitner scheduling, grading and the post-session test.

mod grade;
mod item;
mod learner;
mod leitner;
mod quiz;

pub use grade::{grade_text, levenshtein, normalize, Grade, DEFAULT_THRESHOLD};
pub use item::{harvest_items, Attempt, Direction, LearningItem, PromptKind};
pub use learner::SimulatedLearner;
pub use leitner::{interval, next_due, pick_item, update_box, ExerciseTiming, MAX_BOX, MIN_BOX};
pub use quiz::{
    build_language_test, score_test, test_material, ItemScore, LanguageTest, QuizError, TestItem, TestKind,
    TestResult, RECOGNIZE_CHOICES,
};

/// Grade an answer against the item's foreign text at the default threshold.
pub fn grade_answer(item: &LearningItem, answer_text: &str) -> Grade {
    grade_text(&item.foreign_text, answer_text, DEFAULT_THRESHOLD)
}
