//! Delay-Match: hold original media until its translation is ready, fuse both into
//! a synthesized segment, and present segments to the receiver without overlap.
//! The time this frees up is exposed as [`FreeWindow`]s.

mod align;
mod buffer;
mod schedule;
pub mod vad;
mod windows;

pub use align::{align, reconcile, AlignError, AlignPolicy, SynthesizedSegment};
pub use buffer::{BufferError, MediaBuffer, MediaKind, MediaSegment};
pub use schedule::{schedule_presentation, PresentationQueue, ScheduleError};
pub use vad::{detect_activity, speech_bounds, FrameSpan, VadParams};
pub use windows::{free_windows, FreeWindow};
