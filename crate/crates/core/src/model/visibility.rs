use serde::{Deserialize, Serialize};

use super::{Ms, ParticipantId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VisibilityCause {
    SynthesizedPresentation,
    ManualOverride,
}

/// An interval during which a participant's likeness is (or is not) shown to the partner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub participant: ParticipantId,
    pub visible: bool,
    pub t_start: Ms,
    pub t_end: Ms,
    pub cause: Option<VisibilityCause>,
}

/// Visible while the partner views one of our synthesized segments, or on manual override.
pub fn visibility_state(remote_viewing: bool, manual_override: bool) -> bool {
    remote_viewing || manual_override
}

fn cause_of(remote_viewing: bool, manual_override: bool) -> Option<VisibilityCause> {
    if remote_viewing {
        Some(VisibilityCause::SynthesizedPresentation)
    } else if manual_override {
        Some(VisibilityCause::ManualOverride)
    } else {
        None
    }
}

/// Tracks one participant's visibility and yields closed intervals on every change
/// of (visible, cause).
#[derive(Debug, Clone)]
pub struct VisibilityTracker {
    participant: ParticipantId,
    remote_viewing: bool,
    manual_override: bool,
    since: Ms,
}

impl VisibilityTracker {
    pub fn new(participant: ParticipantId) -> Self {
        Self {
            participant,
            remote_viewing: false,
            manual_override: false,
            since: 0,
        }
    }

    pub fn visible(&self) -> bool {
        visibility_state(self.remote_viewing, self.manual_override)
    }

    pub fn cause(&self) -> Option<VisibilityCause> {
        cause_of(self.remote_viewing, self.manual_override)
    }

    fn current(&self, t_end: Ms) -> Visibility {
        Visibility {
            participant: self.participant.clone(),
            visible: self.visible(),
            t_start: self.since,
            t_end,
            cause: self.cause(),
        }
    }

    /// Update the inputs at `t`; returns the interval closed by the change, if any.
    pub fn update(&mut self, remote_viewing: bool, manual_override: bool, t: Ms) -> Option<Visibility> {
        let before = (self.visible(), self.cause());
        let after = (
            visibility_state(remote_viewing, manual_override),
            cause_of(remote_viewing, manual_override),
        );
        self.remote_viewing = remote_viewing;
        self.manual_override = manual_override;
        if before == after {
            return None;
        }
        let mut closed = self.current(t);
        closed.visible = before.0;
        closed.cause = before.1;
        self.since = t;
        (closed.t_start < closed.t_end).then_some(closed)
    }

    pub fn remote_viewing(&self) -> bool {
        self.remote_viewing
    }

    pub fn manual_override(&self) -> bool {
        self.manual_override
    }

    pub fn close(&mut self, session_end: Ms) -> Option<Visibility> {
        let last = self.current(session_end);
        self.since = session_end;
        (last.t_start < last.t_end).then_some(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn or_rule() {
        assert!(!visibility_state(false, false));
        assert!(visibility_state(true, false));
        assert!(visibility_state(false, true));
        assert!(visibility_state(true, true));
    }

    #[test]
    fn override_off_during_presentation_stays_visible() {
        let mut v = VisibilityTracker::new("alice".into());
        v.update(false, true, 100);
        assert_eq!(v.cause(), Some(VisibilityCause::ManualOverride));
        let closed = v.update(true, true, 200).unwrap();
        assert_eq!(closed.cause, Some(VisibilityCause::ManualOverride));
        assert_eq!(v.update(true, false, 300), None);
        assert!(v.visible());
        assert_eq!(v.cause(), Some(VisibilityCause::SynthesizedPresentation));
        let closed = v.update(false, false, 400).unwrap();
        assert_eq!((closed.t_start, closed.t_end), (200, 400));
        assert!(closed.visible);
        let last = v.close(1000).unwrap();
        assert!(!last.visible);
        assert_eq!(last.cause, None);
    }
}
