use std::time::Duration;

use anyhow::{bail, Context};
use futures_util::{SinkExt, StreamExt};
use talklearn_core::learning::SimulatedLearner;
use talklearn_core::model::ParticipantId;
use talklearn_core::orchestrator::wire::{
    JoinPayload, LeavePayload, LearningAnswerPayload, UtteranceEndPayload, UtteranceStartPayload, VisibilityPayload,
};
use talklearn_core::orchestrator::{Body, ResolvedTrace, WireMessage};
use tokio::sync::mpsc::unbounded_channel;
use tokio_tungstenite::tungstenite::Message;

/// The messages `participant` sends for its part of `trace`: Join, its utterances
/// and overrides in time order, then Leave with the trace's end hint.
pub fn script_for(trace: &ResolvedTrace, participant: &ParticipantId) -> anyhow::Result<Vec<WireMessage>> {
    let session = &trace.session.session_id;
    let me = trace
        .session
        .participants
        .iter()
        .find(|p| p.id == *participant)
        .with_context(|| format!("`{participant}` is not in the trace"))?;
    let msg = |t, body| WireMessage::new(session, Some(participant), Some(t), body);
    let mut timed = Vec::new();
    for u in trace.utterances_of(participant) {
        timed.push((
            u.capture_start,
            Body::UtteranceStart(UtteranceStartPayload {
                utterance_id: u.id.clone(),
            }),
        ));
        timed.push((
            u.capture_end,
            Body::UtteranceEnd(UtteranceEndPayload {
                utterance_id: u.id.clone(),
                text: u.text.clone(),
                language: u.language.clone(),
                translate: u.translate_requested,
                practice: u.practice,
                capture_start: u.capture_start,
            }),
        ));
    }
    for (p, t, on) in &trace.overrides {
        if p == participant {
            timed.push((
                *t,
                Body::VisibilityUpdate(VisibilityPayload {
                    manual_override: *on,
                    ..VisibilityPayload::default()
                }),
            ));
        }
    }
    timed.sort_by_key(|(t, _)| *t);
    let last = timed.last().map_or(0, |(t, _)| *t);

    let mut out = vec![msg(
        0,
        Body::Join(JoinPayload {
            participant: participant.clone(),
            native_language: me.native_language.clone(),
            foreign_language: me.foreign_language.clone(),
        }),
    )];
    out.extend(timed.into_iter().map(|(t, body)| msg(t, body)));
    out.push(msg(last, Body::Leave(LeavePayload { end_hint: trace.end_hint })));
    Ok(out)
}

/// A headless client that plays a fixed script and answers prompts with a
/// simulated learner.
pub struct ScriptedClient {
    pub participant: ParticipantId,
    pub messages: Vec<WireMessage>,
    pub learner: Option<SimulatedLearner>,
    /// Drop the connection right after sending the script instead of waiting for
    /// the session to close.
    pub disconnect_after_send: bool,
    pub timeout: Duration,
}

impl ScriptedClient {
    pub fn new(participant: ParticipantId, messages: Vec<WireMessage>, learner: Option<SimulatedLearner>) -> Self {
        Self {
            participant,
            messages,
            learner,
            disconnect_after_send: false,
            timeout: Duration::from_secs(60),
        }
    }

    /// Run against `url` and return every message received, ending with the closing
    /// metrics snapshot unless the client disconnected early.
    pub async fn run(self, url: &str) -> anyhow::Result<Vec<WireMessage>> {
        let (ws, _) = tokio_tungstenite::connect_async(url)
            .await
            .with_context(|| format!("connecting to {url}"))?;
        let (mut sink, mut source) = ws.split();
        let (tx, mut rx) = unbounded_channel::<String>();
        let writer = tokio::spawn(async move {
            while let Some(text) = rx.recv().await {
                if sink.send(Message::text(text)).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });
        for m in &self.messages {
            tx.send(m.to_json())?;
        }
        if self.disconnect_after_send {
            drop(tx);
            writer.await?;
            return Ok(Vec::new());
        }

        let mut received = Vec::new();
        let reading = async {
            while let Some(frame) = source.next().await {
                let text = match frame? {
                    Message::Text(t) => t.to_string(),
                    Message::Close(_) => break,
                    _ => continue,
                };
                let msg = WireMessage::from_json(&text)?;
                if let (Body::LearningPrompt(prompt), Some(learner)) = (&msg.body, &self.learner) {
                    let answer = learner.answer(&prompt.prompt_id, &prompt.foreign_text);
                    let reply = WireMessage::new(
                        &msg.session_id,
                        Some(&self.participant),
                        Some(prompt.t_end),
                        Body::LearningAnswer(LearningAnswerPayload {
                            prompt_id: prompt.prompt_id.clone(),
                            answer,
                            similarity: None,
                            correct: None,
                            box_level: None,
                        }),
                    );
                    tx.send(reply.to_json())?;
                }
                let done = matches!(&msg.body, Body::MetricsSnapshot(m) if m.closed);
                received.push(msg);
                if done {
                    break;
                }
            }
            anyhow::Ok(())
        };
        match tokio::time::timeout(self.timeout, reading).await {
            Ok(result) => result?,
            Err(_) => bail!("`{}` timed out after {} messages", self.participant, received.len()),
        }
        drop(tx);
        let _ = writer.await;
        Ok(received)
    }
}
