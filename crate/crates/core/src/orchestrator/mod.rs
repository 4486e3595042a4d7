//! Session orchestration: configuration, traces, the event engine, the wire
//! protocol and the simulation and reporting entry points.

pub mod config;
pub mod engine;
pub mod report;
pub mod session;
pub mod sim;
pub mod trace;
pub mod wire;

pub use config::{ClockMode, Config, ConfigFileError, LexiconSpec, TranslationMode};
pub use engine::{AnswerSource, Engine, EngineError, EngineSettings, NoAnswers, Placement};
pub use report::{build_report, render_table, ParticipantReport, Report};
pub use session::{handle_message, SessionState};
pub use sim::{simulate, simulate_resolved, SimError, SimOutput};
pub use trace::{random_trace, OverrideSpec, RandomTraceParams, ResolvedTrace, Trace, TraceError};
pub use wire::{Body, Outbound, WireMessage};
