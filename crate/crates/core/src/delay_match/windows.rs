use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Ms, ParticipantId, StageInterval};

/// A stretch of free time long enough to host learning activities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeWindow {
    pub participant: ParticipantId,
    pub t_start: Ms,
    pub t_end: Ms,
}

impl FreeWindow {
    pub fn len(&self) -> Ms {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.t_end == self.t_start
    }

    pub fn contains(&self, t_start: Ms, t_end: Ms) -> bool {
        self.t_start <= t_start && t_end <= self.t_end
    }
}

/// Maximal unions of back-to-back Waiting/Idle intervals that last at least `min_window_ms`.
pub fn free_windows(intervals: &[StageInterval], min_window_ms: Ms) -> Vec<FreeWindow> {
    let mut by_participant: BTreeMap<&ParticipantId, Vec<&StageInterval>> = BTreeMap::new();
    for interval in intervals {
        by_participant.entry(&interval.participant).or_default().push(interval);
    }
    let mut windows = Vec::new();
    for (participant, mut list) in by_participant {
        list.sort_by_key(|i| (i.t_start, i.t_end));
        let mut open: Option<(Ms, Ms)> = None;
        let mut flush = |open: &mut Option<(Ms, Ms)>| {
            if let Some((a, b)) = open.take() {
                if b - a >= min_window_ms && b > a {
                    windows.push(FreeWindow {
                        participant: participant.clone(),
                        t_start: a,
                        t_end: b,
                    });
                }
            }
        };
        for interval in list {
            if !interval.stage.is_free() {
                flush(&mut open);
                continue;
            }
            open = match open {
                Some((a, b)) if b == interval.t_start => Some((a, interval.t_end)),
                Some(_) => {
                    flush(&mut open);
                    Some((interval.t_start, interval.t_end))
                }
                None => Some((interval.t_start, interval.t_end)),
            };
        }
        flush(&mut open);
    }
    windows
}
