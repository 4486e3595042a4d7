//! Delay-Match conversation core: session model, media alignment and scheduling,
//! translation backends, learning during waits, and the session log.

pub mod batch;
pub mod delay_match;
pub mod learning;
pub mod model;
pub mod telemetry;
pub mod translation;
pub mod orchestrator;
