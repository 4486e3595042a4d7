use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{stage_intervals, Ms, ParticipantId, Stage, StageInterval, TimelineError};
use crate::telemetry::{compute_metrics_with, EventLog, IncentiveConfig, SessionMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantReport {
    pub metrics: SessionMetrics,
    pub stages: Vec<StageInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub session_id: String,
    pub end_ms: Ms,
    pub events: usize,
    pub participants: Vec<ParticipantReport>,
}

/// Metrics and stage timeline for every participant in the log. A log without
/// participants reports a single all-zero row under the id `all`.
pub fn build_report(log: &EventLog, incentive: &IncentiveConfig) -> Result<Report, TimelineError> {
    let stages = stage_intervals(log)?;
    let mut ids = log.participants();
    if ids.is_empty() {
        ids.push(ParticipantId::new("all"));
    }
    let participants = ids
        .iter()
        .map(|p| {
            Ok(ParticipantReport {
                metrics: compute_metrics_with(log, p, incentive)?,
                stages: stages.get(p).cloned().unwrap_or_default(),
            })
        })
        .collect::<Result<_, TimelineError>>()?;
    Ok(Report {
        session_id: log.session_id().to_owned(),
        end_ms: log.closed_at().unwrap_or_else(|| log.last_time()),
        events: log.len(),
        participants,
    })
}

/// Plain-text table of the per-participant metrics.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "session {} ({} events, ends at {} ms)",
        report.session_id, report.events, report.end_ms
    );
    let mut header = format!(
        "{:<12} {:>5} {:>8} {:>8}",
        "participant", "sent", "untr%", "machine%"
    );
    for s in Stage::ALL {
        let _ = write!(header, " {:>10}", s.as_str());
    }
    let _ = write!(header, " {:>10} {:>6} {:>6} {:>8}", "free", "tried", "acc%", "discount");
    let _ = writeln!(out, "{header}");
    for p in &report.participants {
        let m = &p.metrics;
        let mut row = format!(
            "{:<12} {:>5} {:>8.1} {:>8.1}",
            m.participant.as_str(),
            m.messages_sent,
            m.untranslated_pct,
            m.machine_pct
        );
        for s in Stage::ALL {
            let _ = write!(row, " {:>10}", m.stage_durations.get(&s).copied().unwrap_or(0));
        }
        let _ = write!(
            row,
            " {:>10} {:>6} {:>6.1} {:>8.3}",
            m.free_time_ms, m.learning_items_attempted, m.learning_accuracy, m.discount_ratio
        );
        let _ = writeln!(out, "{row}");
    }
    out
}
