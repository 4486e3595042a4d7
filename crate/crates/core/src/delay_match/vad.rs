//! Energy-threshold voice activity detection over per-frame energies.

use serde::{Deserialize, Serialize};

use crate::model::Ms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadParams {
    pub threshold: f32,
    pub min_frames: usize,
    pub hangover_frames: usize,
    pub frame_ms: Ms,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            min_frames: 3,
            hangover_frames: 5,
            frame_ms: 20,
        }
    }
}

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start: usize,
    pub end: usize,
}

impl FrameSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Runs of at least `min_frames` frames with energy ≥ threshold, each extended by
/// `hangover_frames` (clamped to the signal) and merged where they touch or overlap.
pub fn detect_activity(energies: &[f32], params: &VadParams) -> Vec<FrameSpan> {
    let min_frames = params.min_frames.max(1);
    let mut spans: Vec<FrameSpan> = Vec::new();
    let mut run_start = None;
    for i in 0..=energies.len() {
        let active = energies.get(i).is_some_and(|&e| e >= params.threshold);
        match (active, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                run_start = None;
                if i - start < min_frames {
                    continue;
                }
                let span = FrameSpan {
                    start,
                    end: (i + params.hangover_frames).min(energies.len()),
                };
                match spans.last_mut() {
                    Some(prev) if span.start <= prev.end => prev.end = prev.end.max(span.end),
                    _ => spans.push(span),
                }
            }
            _ => {}
        }
    }
    spans
}

/// Offsets in ms of the first detected speech frame and the end of the last one.
pub fn speech_bounds(energies: &[f32], params: &VadParams) -> Option<(Ms, Ms)> {
    let spans = detect_activity(energies, params);
    let first = spans.first()?;
    let last = spans.last()?;
    Some((first.start as Ms * params.frame_ms, last.end as Ms * params.frame_ms))
}
