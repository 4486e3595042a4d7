use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::config::{Config, ConfigFileError};
use super::wire::{
    AuxReason, AuxiliaryPicturePayload, Body, CaptionPayload, LearningAnswerPayload, LearningPromptPayload, Outbound,
    StageUpdatePayload, SynthesizedEndPayload, SynthesizedStartPayload, VisibilityPayload, WireMessage,
};
use crate::delay_match::{
    align, AlignError, AlignPolicy, BufferError, MediaBuffer, MediaKind, MediaSegment, PresentationQueue,
    ScheduleError, SynthesizedSegment,
};
use crate::learning::{
    grade_text, harvest_items, next_due, pick_item, update_box, ExerciseTiming, LearningItem, SimulatedLearner,
};
use crate::delay_match::FreeWindow;
use crate::model::{
    create_session, ConfigError, Ms, Participant, ParticipantId, SessionConfig, Stage, StageError, StageMachine,
    StageTrigger, Utterance, UtteranceId, VisibilityTracker,
};
use crate::telemetry::{
    self, EventDraft, EventLog, LogError, Payload, SegmentRecord, TranslatedSpeech, TranslatedText,
    TranslationFailed,
};
use crate::translation::{Lexicon, PipelineOutput, TranslationBackend, TranslationPipeline, TranslationSource};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] ConfigError),
    #[error(transparent)]
    Config(#[from] ConfigFileError),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(ParticipantId),
    #[error("utterance id `{0}` already used")]
    DuplicateUtterance(UtteranceId),
    #[error("utterance `{0}` was never started")]
    NotStarted(UtteranceId),
    #[error("`{speaker}` is still speaking utterance `{open}`")]
    AlreadySpeaking { speaker: ParticipantId, open: UtteranceId },
    #[error("utterance `{0}` ends before it starts or overlaps its speaker's previous one")]
    BadCapture(UtteranceId),
    #[error("input at {t} is earlier than already processed time {processed}")]
    TimeRegression { t: Ms, processed: Ms },
    #[error("session is closed")]
    Closed,
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// How learning prompts are placed into free time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Prompts are laid out when a free stretch closes and its length is known, so
    /// they always fit and respect the minimum window. Used under the virtual clock.
    Hindsight,
    /// Prompts are shown as soon as an item is due and cut short if free time ends
    /// first. Used under the wall clock.
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSettings {
    pub policy: AlignPolicy,
    pub min_window_ms: Ms,
    pub tail_ms: Ms,
    pub learning_enabled: bool,
    pub threshold: f64,
    pub timing: ExerciseTiming,
    pub placement: Placement,
}

impl EngineSettings {
    pub fn from_config(config: &Config, placement: Placement) -> Self {
        Self {
            policy: config.delay_match.policy,
            min_window_ms: config.delay_match.min_window_ms,
            tail_ms: config.delay_match.tail_ms,
            learning_enabled: config.learning.enabled,
            threshold: config.learning.threshold,
            timing: config.timing(),
            placement,
        }
    }
}

/// Supplies answers to prompts placed in hindsight.
pub trait AnswerSource {
    /// `pending` holds messages produced but not yet delivered; a source that
    /// waits on a remote client must deliver them first so the prompt is seen.
    /// `None` means nobody will answer.
    fn answer(
        &mut self,
        to: &ParticipantId,
        prompt: &LearningPromptPayload,
        pending: &mut Vec<Outbound>,
    ) -> Option<String>;
}

impl AnswerSource for SimulatedLearner {
    fn answer(&mut self, _to: &ParticipantId, prompt: &LearningPromptPayload, _: &mut Vec<Outbound>) -> Option<String> {
        Some(SimulatedLearner::answer(self, &prompt.prompt_id, &prompt.foreign_text))
    }
}

/// Nobody answers: every hindsight prompt is graded as a blank answer.
pub struct NoAnswers;

impl AnswerSource for NoAnswers {
    fn answer(&mut self, _: &ParticipantId, _: &LearningPromptPayload, _: &mut Vec<Outbound>) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    PresentationEnd(UtteranceId),
    CaptureEnd(UtteranceId),
    TranslationComplete(UtteranceId),
    PresentationStart(UtteranceId),
    CaptureStart(UtteranceId),
    Override(bool),
    Answer { prompt_id: String, text: String },
    Expire(String),
    Wake,
}

impl Action {
    /// Order of actions that share a timestamp.
    fn rank(&self) -> u8 {
        match self {
            Action::PresentationEnd(_) => 0,
            Action::CaptureEnd(_) => 1,
            Action::TranslationComplete(_) => 2,
            Action::PresentationStart(_) => 3,
            Action::CaptureStart(_) => 4,
            Action::Override(_) => 5,
            Action::Answer { .. } => 6,
            Action::Expire(_) => 7,
            Action::Wake => 8,
        }
    }

    fn tag(&self) -> &str {
        match self {
            Action::PresentationEnd(u)
            | Action::CaptureEnd(u)
            | Action::TranslationComplete(u)
            | Action::PresentationStart(u)
            | Action::CaptureStart(u) => u.as_str(),
            Action::Answer { prompt_id, .. } | Action::Expire(prompt_id) => prompt_id,
            Action::Override(_) | Action::Wake => "",
        }
    }
}

/// Queue order: time, then action rank, then participant and subject. The counter
/// only separates entries that agree on all of these, which can only come from the
/// same participant in submission order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    t: Ms,
    rank: u8,
    participant: ParticipantId,
    tag: String,
    counter: u64,
}

#[derive(Debug, Clone)]
struct UttState {
    capture_start: Ms,
    utterance: Option<Utterance>,
    output: Option<PipelineOutput>,
    synth: Option<SynthesizedSegment>,
}

#[derive(Debug, Clone, Default)]
struct Stretch {
    start: Ms,
    pieces: Vec<(Stage, Ms, Ms)>,
    learning: Vec<(Ms, Ms)>,
}

#[derive(Debug, Clone)]
struct ActivePrompt {
    prompt: LearningPromptPayload,
    item: LearningItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ShownState {
    visible: bool,
    cause: Option<crate::model::VisibilityCause>,
}

/// The deterministic session core shared by simulation and the live server.
///
/// Inputs only enqueue actions; everything observable (log events and outbound
/// messages) is produced while processing the queue in key order, one timestamp at
/// a time. Feeding the same inputs therefore yields the same log however the
/// inputs were interleaved, as long as processing never runs past a time for
/// which input may still arrive.
pub struct Engine {
    session_id: String,
    participants: Vec<Participant>,
    settings: EngineSettings,
    lexicon: Option<Lexicon>,
    pipeline: TranslationPipeline,
    queue: BTreeMap<Key, Action>,
    counter: u64,
    utts: BTreeMap<UtteranceId, UttState>,
    open_capture: BTreeMap<ParticipantId, UtteranceId>,
    last_capture_end: BTreeMap<ParticipantId, Ms>,
    buffer: MediaBuffer,
    queues: BTreeMap<ParticipantId, PresentationQueue>,
    stages: BTreeMap<ParticipantId, StageMachine>,
    stretches: BTreeMap<ParticipantId, Stretch>,
    presenting: BTreeMap<ParticipantId, UtteranceId>,
    overrides: BTreeMap<ParticipantId, bool>,
    visibility: BTreeMap<ParticipantId, VisibilityTracker>,
    shown: BTreeMap<ParticipantId, ShownState>,
    aux: BTreeMap<ParticipantId, AuxReason>,
    item_states: BTreeMap<ParticipantId, BTreeMap<String, LearningItem>>,
    prompt_counter: BTreeMap<ParticipantId, u64>,
    active: BTreeMap<ParticipantId, ActivePrompt>,
    wake_at: BTreeMap<ParticipantId, Ms>,
    log: EventLog,
    processed_before: Ms,
    activity_end: Ms,
    closing: bool,
    closed: bool,
}

impl Engine {
    pub fn new(
        session: SessionConfig,
        settings: EngineSettings,
        lexicon: Option<Lexicon>,
        backend: Box<dyn TranslationBackend>,
        config: &Config,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let checked = create_session(session)?;
        let mut participants: Vec<Participant> = checked.participants().to_vec();
        participants.sort_by(|a, b| a.id.cmp(&b.id));
        let ids: Vec<ParticipantId> = participants.iter().map(|p| p.id.clone()).collect();
        Ok(Self {
            session_id: checked.id.clone(),
            settings,
            lexicon,
            pipeline: TranslationPipeline::new(
                backend,
                config.translation.latency,
                config.translation.speech_rate_ms_per_char,
                seed,
            ),
            queue: BTreeMap::new(),
            counter: 0,
            utts: BTreeMap::new(),
            open_capture: BTreeMap::new(),
            last_capture_end: BTreeMap::new(),
            buffer: MediaBuffer::new(),
            queues: ids.iter().map(|p| (p.clone(), PresentationQueue::new(p.clone()))).collect(),
            stages: ids.iter().map(|p| (p.clone(), StageMachine::new(p.clone()))).collect(),
            stretches: per(&ids, Stretch::default()),
            presenting: BTreeMap::new(),
            overrides: per(&ids, false),
            visibility: ids.iter().map(|p| (p.clone(), VisibilityTracker::new(p.clone()))).collect(),
            shown: per(
                &ids,
                ShownState {
                    visible: false,
                    cause: None,
                },
            ),
            aux: per(&ids, AuxReason::None),
            item_states: BTreeMap::new(),
            prompt_counter: BTreeMap::new(),
            active: BTreeMap::new(),
            wake_at: BTreeMap::new(),
            log: EventLog::new(checked.id.clone()),
            participants,
            processed_before: 0,
            activity_end: 0,
            closing: false,
            closed: false,
        })
    }

    /// Engine for `session` with the backend, lexicon and settings from `config`.
    pub fn from_config(
        session: SessionConfig,
        config: &Config,
        lexicon: Option<Lexicon>,
        placement: Placement,
        seed: u64,
    ) -> Result<Self, EngineError> {
        let backend = config.translation.backend(lexicon.as_ref())?;
        Self::new(
            session,
            EngineSettings::from_config(config, placement),
            lexicon,
            backend,
            config,
            seed,
        )
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Everything before this time has been processed; inputs must not be earlier.
    pub fn processed_before(&self) -> Ms {
        self.processed_before
    }

    /// Capture start recorded for an utterance still being spoken.
    pub fn open_capture_start(&self, speaker: &ParticipantId) -> Option<(UtteranceId, Ms)> {
        let id = self.open_capture.get(speaker)?;
        Some((id.clone(), self.utts[id].capture_start))
    }

    pub fn stage_of(&self, participant: &ParticipantId) -> Option<Stage> {
        if self.active.contains_key(participant) {
            return Some(Stage::Learning);
        }
        self.stages.get(participant).map(StageMachine::stage)
    }

    fn participant(&self, id: &ParticipantId) -> Result<&Participant, EngineError> {
        self.participants
            .iter()
            .find(|p| p.id == *id)
            .ok_or_else(|| EngineError::UnknownParticipant(id.clone()))
    }

    fn partner(&self, id: &ParticipantId) -> &Participant {
        self.participants.iter().find(|p| p.id != *id).expect("two participants")
    }

    fn check_input(&self, t: Ms) -> Result<(), EngineError> {
        if self.closed {
            return Err(EngineError::Closed);
        }
        if t < self.processed_before {
            return Err(EngineError::TimeRegression {
                t,
                processed: self.processed_before,
            });
        }
        Ok(())
    }

    fn push(&mut self, t: Ms, participant: &ParticipantId, action: Action) {
        self.counter += 1;
        let key = Key {
            t,
            rank: action.rank(),
            participant: participant.clone(),
            tag: action.tag().to_owned(),
            counter: self.counter,
        };
        self.queue.insert(key, action);
    }

    // ---- inputs ----------------------------------------------------------------

    pub fn start_utterance(&mut self, speaker: &ParticipantId, id: &UtteranceId, t: Ms) -> Result<(), EngineError> {
        self.check_input(t)?;
        self.participant(speaker)?;
        if self.utts.contains_key(id) {
            return Err(EngineError::DuplicateUtterance(id.clone()));
        }
        if let Some(open) = self.open_capture.get(speaker) {
            return Err(EngineError::AlreadySpeaking {
                speaker: speaker.clone(),
                open: open.clone(),
            });
        }
        if self.last_capture_end.get(speaker).is_some_and(|&end| t < end) {
            return Err(EngineError::BadCapture(id.clone()));
        }
        self.utts.insert(
            id.clone(),
            UttState {
                capture_start: t,
                utterance: None,
                output: None,
                synth: None,
            },
        );
        self.open_capture.insert(speaker.clone(), id.clone());
        self.push(t, speaker, Action::CaptureStart(id.clone()));
        Ok(())
    }

    /// Complete an utterance. Its capture start is the one recorded by
    /// [`Engine::start_utterance`]; the utterance's own `capture_start` is ignored.
    pub fn end_utterance(&mut self, mut utterance: Utterance) -> Result<(), EngineError> {
        self.check_input(utterance.capture_end)?;
        let speaker = utterance.speaker.clone();
        self.participant(&speaker)?;
        if self.open_capture.get(&speaker) != Some(&utterance.id) {
            return Err(EngineError::NotStarted(utterance.id.clone()));
        }
        let state = self.utts.get_mut(&utterance.id).expect("open capture is tracked");
        utterance.capture_start = state.capture_start;
        if utterance.capture_end <= utterance.capture_start {
            return Err(EngineError::BadCapture(utterance.id.clone()));
        }
        utterance.check()?;
        self.open_capture.remove(&speaker);
        self.last_capture_end.insert(speaker.clone(), utterance.capture_end);
        let (id, end) = (utterance.id.clone(), utterance.capture_end);
        state.utterance = Some(utterance);
        self.push(end, &speaker, Action::CaptureEnd(id));
        Ok(())
    }

    /// Convenience for a complete utterance known up front.
    pub fn submit_utterance(&mut self, utterance: Utterance) -> Result<(), EngineError> {
        self.start_utterance(&utterance.speaker, &utterance.id, utterance.capture_start)?;
        self.end_utterance(utterance)
    }

    pub fn set_override(&mut self, participant: &ParticipantId, on: bool, t: Ms) -> Result<(), EngineError> {
        self.check_input(t)?;
        self.participant(participant)?;
        self.push(t, participant, Action::Override(on));
        Ok(())
    }

    /// An answer to an online prompt. Answers to prompts that already ended are ignored.
    pub fn submit_answer(
        &mut self,
        participant: &ParticipantId,
        prompt_id: &str,
        text: &str,
        t: Ms,
    ) -> Result<(), EngineError> {
        self.check_input(t)?;
        self.participant(participant)?;
        self.push(
            t,
            participant,
            Action::Answer {
                prompt_id: prompt_id.to_owned(),
                text: text.to_owned(),
            },
        );
        Ok(())
    }

    // ---- processing ------------------------------------------------------------

    /// Process every queued action strictly before `bound`.
    pub fn run_until(
        &mut self,
        bound: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        if self.closed {
            return Err(EngineError::Closed);
        }
        while let Some((key, _)) = self.queue.first_key_value() {
            if key.t >= bound {
                break;
            }
            let t = key.t;
            self.process_batch(t, answers, out)?;
        }
        self.processed_before = self.processed_before.max(bound);
        Ok(())
    }

    pub fn run_all(&mut self, answers: &mut dyn AnswerSource, out: &mut Vec<Outbound>) -> Result<(), EngineError> {
        while let Some((key, _)) = self.queue.first_key_value() {
            let t = key.t;
            self.process_batch(t, answers, out)?;
        }
        Ok(())
    }

    fn process_batch(
        &mut self,
        t: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        let mut triggers: BTreeMap<ParticipantId, Vec<StageTrigger>> = BTreeMap::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().t != t {
                break;
            }
            let (key, action) = entry.remove_entry();
            if action != Action::Wake {
                self.activity_end = self.activity_end.max(t);
            }
            self.handle(&key.participant, action, t, &mut triggers, out)?;
        }
        for (participant, batch) in triggers {
            self.apply_triggers(&participant, &batch, t, answers, out)?;
        }
        self.refresh_visibility(t, out)?;
        self.refresh_aux(t, out);
        if self.settings.placement == Placement::Online && self.settings.learning_enabled && !self.closing {
            self.offer_prompts(t, out)?;
        }
        Ok(())
    }

    fn emit(
        &mut self,
        participant: &ParticipantId,
        utterance: Option<&UtteranceId>,
        t_start: Ms,
        t_end: Ms,
        payload: Payload,
    ) -> Result<u64, EngineError> {
        Ok(self
            .log
            .append_event(EventDraft::new(participant, utterance, t_start, t_end, payload))?)
    }

    fn send(&self, out: &mut Vec<Outbound>, to: &ParticipantId, t: Ms, body: Body) {
        out.push(Outbound {
            to: to.clone(),
            message: WireMessage::new(&self.session_id, Some(to), Some(t), body),
        });
    }

    fn handle(
        &mut self,
        participant: &ParticipantId,
        action: Action,
        t: Ms,
        triggers: &mut BTreeMap<ParticipantId, Vec<StageTrigger>>,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        match action {
            Action::CaptureStart(id) => {
                self.buffer.register(&id);
                triggers.entry(participant.clone()).or_default().push(StageTrigger::UtteranceStart);
            }
            Action::CaptureEnd(id) => self.capture_end(&id, t, triggers)?,
            Action::TranslationComplete(id) => self.translation_complete(&id)?,
            Action::PresentationStart(id) => {
                let state = &self.utts[&id];
                let seg = state.synth.clone().expect("scheduled segment");
                let receiver = participant.clone();
                let (ps, pe) = (t, seg.presentation_end.expect("scheduled"));
                if seg.source == TranslationSource::Machine {
                    let heard = seg.speech_duration_ms.min(seg.final_duration_ms);
                    self.emit(
                        &seg.speaker,
                        Some(&id),
                        ps,
                        ps + heard,
                        Payload::TranslatedSpeech(TranslatedSpeech {
                            receiver: receiver.clone(),
                            duration_ms: seg.speech_duration_ms,
                        }),
                    )?;
                }
                self.emit(
                    &receiver,
                    Some(&id),
                    ps,
                    pe,
                    Payload::SynthesizedVideo(telemetry::SynthesizedVideo {
                        speaker: seg.speaker.clone(),
                        caption: seg.caption_text.clone(),
                        source: seg.source,
                        video_duration_ms: seg.video_duration_ms,
                        speech_duration_ms: seg.speech_duration_ms,
                        final_duration_ms: seg.final_duration_ms,
                        pad_applied_ms: seg.pad_applied_ms,
                        policy: seg.policy,
                        ready_time: seg.ready_time,
                    }),
                )?;
                triggers.entry(receiver.clone()).or_default().push(StageTrigger::PresentationStart);
                self.presenting.insert(receiver.clone(), id.clone());
                self.send(
                    out,
                    &receiver,
                    t,
                    Body::Caption(CaptionPayload {
                        utterance_id: id.clone(),
                        text: seg.caption_text.clone(),
                    }),
                );
                self.send(
                    out,
                    &receiver,
                    t,
                    Body::SynthesizedStart(SynthesizedStartPayload {
                        utterance_id: id.clone(),
                        speaker: seg.speaker.clone(),
                        segment_ref: format!("synth/{}/{}", self.session_id, id),
                        duration_ms: seg.final_duration_ms,
                        source: seg.source,
                    }),
                );
            }
            Action::PresentationEnd(id) => {
                triggers.entry(participant.clone()).or_default().push(StageTrigger::PresentationEnd);
                if self.presenting.get(participant) == Some(&id) {
                    self.presenting.remove(participant);
                }
                self.buffer.release(&id);
                self.send(
                    out,
                    participant,
                    t,
                    Body::SynthesizedEnd(SynthesizedEndPayload { utterance_id: id }),
                );
            }
            Action::Override(on) => {
                self.overrides.insert(participant.clone(), on);
            }
            Action::Answer { prompt_id, text } => {
                if self.active.get(participant).is_some_and(|a| a.prompt.prompt_id == prompt_id) {
                    self.finish_online_prompt(participant, t, Some(text), out)?;
                }
            }
            Action::Expire(prompt_id) => {
                if self.active.get(participant).is_some_and(|a| a.prompt.prompt_id == prompt_id) {
                    self.finish_online_prompt(participant, t, None, out)?;
                }
            }
            Action::Wake => {
                if self.wake_at.get(participant) == Some(&t) {
                    self.wake_at.remove(participant);
                }
            }
        }
        Ok(())
    }

    fn capture_end(
        &mut self,
        id: &UtteranceId,
        t: Ms,
        triggers: &mut BTreeMap<ParticipantId, Vec<StageTrigger>>,
    ) -> Result<(), EngineError> {
        let u = self.utts[id].utterance.clone().expect("ended utterance");
        let speaker = u.speaker.clone();
        let receiver = self.partner(&speaker).clone();
        // an utterance cut off by a disconnect carries no text
        let interrupted = u.text.is_empty();
        let duration = u.capture_end - u.capture_start;
        let video = MediaSegment::mock(&self.session_id, id, MediaKind::Video, duration, &u.text);
        let audio = MediaSegment::mock(&self.session_id, id, MediaKind::Audio, duration, &u.text);
        let record = |s: &MediaSegment| SegmentRecord {
            payload_ref: s.payload_ref.clone(),
            checksum: s.checksum.clone(),
            duration_ms: s.duration_ms,
        };
        let well_formed = !interrupted && self.lexicon.as_ref().is_some_and(|l| l.covers(&u.text, &u.language));
        self.emit(
            &speaker,
            Some(id),
            u.capture_start,
            u.capture_end,
            Payload::OriginalMedia(telemetry::OriginalMedia {
                receiver: receiver.id.clone(),
                language: u.language.clone(),
                translate_requested: u.translate_requested,
                practice: u.practice,
                well_formed,
                video: record(&video),
                audio: record(&audio),
            }),
        )?;
        self.emit(
            &speaker,
            Some(id),
            t,
            t,
            Payload::TranscribedText(telemetry::TranscribedText { text: u.text.clone() }),
        )?;
        triggers.entry(speaker.clone()).or_default().push(StageTrigger::UtteranceEnd);
        if interrupted {
            self.buffer.release(id);
            return Ok(());
        }
        self.buffer.ingest_segment(video)?;
        self.buffer.ingest_segment(audio)?;

        if !u.practice {
            triggers.entry(receiver.id.clone()).or_default().push(StageTrigger::RemoteUtteranceEnd);
            self.queues.get_mut(&receiver.id).expect("queue per participant").expect(&u)?;
        } else {
            self.practice_answer(&u, t)?;
        }
        if !u.practice || u.translate_requested {
            let dst = if u.practice {
                self.participant(&speaker)?.native_language.clone()
            } else {
                receiver.native_language.clone()
            };
            let output = self.pipeline.process(&u, &dst);
            let done = output.result.t_completed;
            self.utts.get_mut(id).expect("tracked").output = Some(output);
            self.push(done, &speaker, Action::TranslationComplete(id.clone()));
        } else {
            self.buffer.release(id);
        }
        Ok(())
    }

    /// A practice utterance is graded against the closest item the speaker already has.
    fn practice_answer(&mut self, u: &Utterance, t: Ms) -> Result<(), EngineError> {
        let known: Vec<LearningItem> = harvest_items(&self.log, &u.speaker)
            .into_iter()
            .filter(|item| item.due_at <= t)
            .collect();
        let mut best: Option<(&LearningItem, crate::learning::Grade)> = None;
        for item in &known {
            let grade = grade_text(&item.foreign_text, &u.text, self.settings.threshold);
            if best.as_ref().is_none_or(|(_, g)| grade.similarity > g.similarity) {
                best = Some((item, grade));
            }
        }
        let payload = telemetry::LearningAnswer {
            prompt_id: None,
            item_id: best.as_ref().map(|(item, _)| item.id.clone()),
            answer: u.text.clone(),
            similarity: best.as_ref().map(|(_, g)| g.similarity),
            correct: best.as_ref().map(|(_, g)| g.correct),
            box_before: None,
            box_after: None,
            due_at: None,
        };
        self.emit(&u.speaker, Some(&u.id), t, t, Payload::LearningAnswer(payload))?;
        Ok(())
    }

    fn translation_complete(&mut self, id: &UtteranceId) -> Result<(), EngineError> {
        let state = &self.utts[id];
        let u = state.utterance.clone().expect("ended utterance");
        let output = state.output.clone().expect("translated");
        let r = &output.result;
        let dst = if u.practice {
            self.participant(&u.speaker)?.native_language.clone()
        } else {
            self.partner(&u.speaker).native_language.clone()
        };
        let payload = match &output.failure {
            Some(f) => Payload::TranslationFailed(TranslationFailed {
                reason: f.reason,
                detail: f.detail.clone(),
            }),
            None => Payload::TranslatedText(TranslatedText {
                text: r.translated_text.clone(),
                source: r.source,
                src: u.language.clone(),
                dst,
            }),
        };
        self.emit(&u.speaker, Some(id), r.t_requested, r.t_completed, payload)?;
        if u.practice {
            self.buffer.release(id);
            return Ok(());
        }
        let synth = align(&u, &self.buffer, r, self.settings.policy)?;
        let receiver = self.partner(&u.speaker).id.clone();
        let released = self.queues.get_mut(&receiver).expect("queue per participant").offer(synth)?;
        for seg in released {
            let (ps, pe) = (
                seg.presentation_start.expect("scheduled"),
                seg.presentation_end.expect("scheduled"),
            );
            let seg_id = seg.utterance_id.clone();
            self.utts.get_mut(&seg_id).expect("tracked").synth = Some(seg);
            self.push(ps, &receiver, Action::PresentationStart(seg_id.clone()));
            self.push(pe, &receiver, Action::PresentationEnd(seg_id));
        }
        Ok(())
    }

    // ---- stages and free time --------------------------------------------------

    fn apply_triggers(
        &mut self,
        participant: &ParticipantId,
        batch: &[StageTrigger],
        t: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        let machine = self.stages.get_mut(participant).expect("machine per participant");
        let (before, since) = (machine.stage(), machine.since());
        machine.advance_batch(batch, t)?;
        let after = machine.stage();
        if before == after {
            return Ok(());
        }
        self.send(out, participant, t, Body::StageUpdate(StageUpdatePayload { stage: after }));
        self.stage_changed(participant, before, since, after, t, answers, out)
    }

    #[allow(clippy::too_many_arguments)]
    fn stage_changed(
        &mut self,
        participant: &ParticipantId,
        before: Stage,
        since: Ms,
        after: Stage,
        t: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        if before.is_free() {
            if since < t {
                let stretch = self.stretches.get_mut(participant).expect("open stretch");
                stretch.pieces.push((before, since, t));
            }
        } else if since < t {
            self.emit(
                participant,
                None,
                since,
                t,
                Payload::StageChange(telemetry::StageChange { stage: before }),
            )?;
        }
        match (before.is_free(), after.is_free()) {
            (false, true) => {
                self.stretches.insert(
                    participant.clone(),
                    Stretch {
                        start: t,
                        ..Stretch::default()
                    },
                );
            }
            (true, false) => self.close_stretch(participant, t, answers, out)?,
            _ => {}
        }
        Ok(())
    }

    fn close_stretch(
        &mut self,
        participant: &ParticipantId,
        end: Ms,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        if self.active.contains_key(participant) {
            self.finish_online_prompt(participant, end, None, out)?;
        }
        let stretch = self.stretches.remove(participant).unwrap_or_default();
        let learning = match self.settings.placement {
            Placement::Hindsight
                if self.settings.learning_enabled && end - stretch.start >= self.settings.min_window_ms =>
            {
                let window = FreeWindow {
                    participant: participant.clone(),
                    t_start: stretch.start,
                    t_end: end,
                };
                self.place_prompts(&window, answers, out)?
            }
            _ => stretch.learning.clone(),
        };
        for (stage, a, b) in overlay(&stretch.pieces, &learning) {
            self.emit(
                participant,
                None,
                a,
                b,
                Payload::StageChange(telemetry::StageChange { stage }),
            )?;
        }
        Ok(())
    }

    /// The participant's items with their current Leitner state.
    fn items_for(&self, participant: &ParticipantId) -> Vec<LearningItem> {
        let mut items = harvest_items(&self.log, participant);
        if let Some(states) = self.item_states.get(participant) {
            for item in &mut items {
                if let Some(state) = states.get(&item.id) {
                    item.box_level = state.box_level;
                    item.due_at = state.due_at;
                    item.history = state.history.clone();
                }
            }
        }
        items
    }

    fn next_prompt_id(&mut self, participant: &ParticipantId) -> String {
        let n = self.prompt_counter.entry(participant.clone()).or_default();
        *n += 1;
        format!("{participant}-{n}")
    }

    fn prompt_for(&mut self, item: &LearningItem, t_start: Ms, t_end: Ms) -> LearningPromptPayload {
        LearningPromptPayload {
            prompt_id: self.next_prompt_id(&item.owner),
            item_id: item.id.clone(),
            prompt_kind: item.prompt_kind,
            direction: item.direction,
            native_text: item.native_text.clone(),
            foreign_text: item.foreign_text.clone(),
            box_level: item.box_level,
            t_start,
            t_end,
        }
    }

    fn emit_shown(&mut self, participant: &ParticipantId, prompt: &LearningPromptPayload, t_end: Ms) -> Result<(), EngineError> {
        self.emit(
            participant,
            None,
            prompt.t_start,
            t_end,
            Payload::LearningItemShown(telemetry::LearningItemShown {
                prompt_id: prompt.prompt_id.clone(),
                item_id: prompt.item_id.clone(),
                prompt_kind: prompt.prompt_kind,
                direction: prompt.direction,
                native_text: prompt.native_text.clone(),
                foreign_text: prompt.foreign_text.clone(),
                box_level: prompt.box_level,
            }),
        )?;
        Ok(())
    }

    /// Grade, update the item's box, log the answer and reply to the participant.
    #[allow(clippy::too_many_arguments)]
    fn record_answer(
        &mut self,
        participant: &ParticipantId,
        prompt: &LearningPromptPayload,
        item: &LearningItem,
        answer: Option<String>,
        t_start: Ms,
        t_end: Ms,
        scored: bool,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        let text = answer.unwrap_or_default();
        let (payload, reply) = if scored {
            let grade = grade_text(&item.foreign_text, &text, self.settings.threshold);
            let updated = update_box(item, grade.correct, t_end);
            let payload = telemetry::LearningAnswer {
                prompt_id: Some(prompt.prompt_id.clone()),
                item_id: Some(item.id.clone()),
                answer: text.clone(),
                similarity: Some(grade.similarity),
                correct: Some(grade.correct),
                box_before: Some(item.box_level),
                box_after: Some(updated.box_level),
                due_at: Some(updated.due_at),
            };
            let reply = LearningAnswerPayload {
                prompt_id: prompt.prompt_id.clone(),
                answer: text,
                similarity: Some(grade.similarity),
                correct: Some(grade.correct),
                box_level: Some(updated.box_level),
            };
            self.item_states
                .entry(participant.clone())
                .or_default()
                .insert(item.id.clone(), updated);
            (payload, reply)
        } else {
            let payload = telemetry::LearningAnswer {
                prompt_id: Some(prompt.prompt_id.clone()),
                item_id: Some(item.id.clone()),
                answer: text.clone(),
                similarity: None,
                correct: None,
                box_before: Some(item.box_level),
                box_after: Some(item.box_level),
                due_at: Some(item.due_at),
            };
            let reply = LearningAnswerPayload {
                prompt_id: prompt.prompt_id.clone(),
                answer: text,
                similarity: None,
                correct: None,
                box_level: Some(item.box_level),
            };
            (payload, reply)
        };
        self.emit(participant, None, t_start, t_end, Payload::LearningAnswer(payload))?;
        self.send(out, participant, t_end, Body::LearningAnswer(reply));
        Ok(())
    }

    /// Fill a closed free window with prompts, earliest-due first, jumping ahead to
    /// the next due time when nothing is due yet.
    fn place_prompts(
        &mut self,
        window: &FreeWindow,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<Vec<(Ms, Ms)>, EngineError> {
        let participant = window.participant.clone();
        let timing = self.settings.timing;
        let mut items = self.items_for(&participant);
        let mut placed = Vec::new();
        let mut cursor = window.t_start;
        loop {
            let Some(index) = pick_item(&items, window, cursor, &timing)
                .map(|picked| items.iter().position(|i| i.id == picked.id).expect("picked from items"))
            else {
                match next_due(&items, window, cursor, &timing) {
                    Some(due) => {
                        cursor = due;
                        continue;
                    }
                    None => break,
                }
            };
            let item = items[index].clone();
            let estimate = timing.estimate(&item);
            let speech = estimate - timing.answer_allowance_ms;
            let (start, end) = (cursor, cursor + estimate);
            let prompt = self.prompt_for(&item, start, end);
            self.emit_shown(&participant, &prompt, end)?;
            self.send(out, &participant, start, Body::LearningPrompt(prompt.clone()));
            let answer = answers.answer(&participant, &prompt, out);
            self.record_answer(&participant, &prompt, &item, answer, start + speech, end, true, out)?;
            if let Some(state) = self.item_states.get(&participant).and_then(|s| s.get(&item.id)) {
                items[index] = state.clone();
            }
            placed.push((start, end));
            cursor = end;
        }
        Ok(placed)
    }

    fn offer_prompts(&mut self, t: Ms, out: &mut Vec<Outbound>) -> Result<(), EngineError> {
        let ids: Vec<ParticipantId> = self.participants.iter().map(|p| p.id.clone()).collect();
        for participant in ids {
            if self.active.contains_key(&participant) || !self.stages[&participant].stage().is_free() {
                continue;
            }
            let window = FreeWindow {
                participant: participant.clone(),
                t_start: t,
                t_end: Ms::MAX / 2,
            };
            let timing = self.settings.timing;
            let items = self.items_for(&participant);
            if let Some(item) = pick_item(&items, &window, t, &timing).cloned() {
                let deadline = t + timing.estimate(&item);
                let prompt = self.prompt_for(&item, t, deadline);
                self.send(out, &participant, t, Body::LearningPrompt(prompt.clone()));
                self.send(
                    out,
                    &participant,
                    t,
                    Body::StageUpdate(StageUpdatePayload { stage: Stage::Learning }),
                );
                self.push(deadline, &participant, Action::Expire(prompt.prompt_id.clone()));
                self.active.insert(participant.clone(), ActivePrompt { prompt, item });
            } else if let Some(due) = next_due(&items, &window, t, &timing) {
                if self.wake_at.get(&participant).is_none_or(|&w| w > due) {
                    self.wake_at.insert(participant.clone(), due);
                    self.push(due, &participant, Action::Wake);
                }
            }
        }
        Ok(())
    }

    fn finish_online_prompt(
        &mut self,
        participant: &ParticipantId,
        t: Ms,
        answer: Option<String>,
        out: &mut Vec<Outbound>,
    ) -> Result<(), EngineError> {
        let Some(active) = self.active.remove(participant) else { return Ok(()) };
        self.emit_shown(participant, &active.prompt, t)?;
        let scored = answer.is_some();
        self.record_answer(participant, &active.prompt, &active.item, answer, t, t, scored, out)?;
        if let Some(stretch) = self.stretches.get_mut(participant) {
            stretch.learning.push((active.prompt.t_start, t));
        }
        let stage = self.stages[participant].stage();
        self.send(out, participant, t, Body::StageUpdate(StageUpdatePayload { stage }));
        Ok(())
    }

    // ---- visibility and hints --------------------------------------------------

    fn refresh_visibility(&mut self, t: Ms, out: &mut Vec<Outbound>) -> Result<(), EngineError> {
        let ids: Vec<ParticipantId> = self.participants.iter().map(|p| p.id.clone()).collect();
        for id in ids {
            let partner = self.partner(&id).id.clone();
            let remote_viewing = self.presenting.contains_key(&partner);
            let manual = self.overrides[&id];
            let tracker = self.visibility.get_mut(&id).expect("tracker per participant");
            let closed = tracker.update(remote_viewing, manual, t);
            let now = ShownState {
                visible: tracker.visible(),
                cause: tracker.cause(),
            };
            if let Some(v) = closed {
                self.emit(
                    &id,
                    None,
                    v.t_start,
                    v.t_end,
                    Payload::VisibilityChange(telemetry::VisibilityChange {
                        visible: v.visible,
                        cause: v.cause,
                    }),
                )?;
            }
            if self.shown[&id] != now {
                self.shown.insert(id.clone(), now);
                self.send(
                    out,
                    &id,
                    t,
                    Body::VisibilityUpdate(VisibilityPayload {
                        visible: now.visible,
                        cause: now.cause,
                        manual_override: manual,
                    }),
                );
            }
        }
        Ok(())
    }

    fn refresh_aux(&mut self, t: Ms, out: &mut Vec<Outbound>) {
        let ids: Vec<ParticipantId> = self.participants.iter().map(|p| p.id.clone()).collect();
        for id in ids {
            let partner = self.partner(&id).id.clone();
            let own = self.stages[&id].stage();
            let reason = if own == Stage::Viewing {
                AuxReason::None
            } else if self.stages[&partner].stage() == Stage::Speaking {
                AuxReason::RemoteSpeaking
            } else if self.stages[&id].pipeline() > 0 {
                AuxReason::Translating
            } else {
                AuxReason::None
            };
            if self.aux[&id] != reason {
                self.aux.insert(id.clone(), reason);
                self.send(out, &id, t, Body::AuxiliaryPicture(AuxiliaryPicturePayload { reason }));
            }
        }
    }

    // ---- closing ---------------------------------------------------------------

    /// Drain the queue, end the session and close the log. The session lasts until
    /// `end_hint` or until `tail_ms` after the last activity, whichever is later.
    /// Utterances still being captured are cut off and logged without text.
    pub fn finish(
        &mut self,
        end_hint: Option<Ms>,
        answers: &mut dyn AnswerSource,
        out: &mut Vec<Outbound>,
    ) -> Result<Ms, EngineError> {
        if self.closed {
            return Err(EngineError::Closed);
        }
        self.closing = true;
        self.queue.retain(|_, action| *action != Action::Wake);
        self.run_all(answers, out)?;
        let dangling: Vec<(ParticipantId, UtteranceId)> =
            self.open_capture.iter().map(|(p, u)| (p.clone(), u.clone())).collect();
        if !dangling.is_empty() {
            for (speaker, id) in dangling {
                let cs = self.utts[&id].capture_start;
                let cut = self.activity_end.max(cs + 1);
                let partner_lang = self.participant(&speaker)?.native_language.clone();
                let state = self.utts.get_mut(&id).expect("tracked");
                state.utterance = Some(Utterance {
                    id: id.clone(),
                    speaker: speaker.clone(),
                    language: partner_lang,
                    text: String::new(),
                    capture_start: cs,
                    capture_end: cut,
                    translate_requested: false,
                    practice: true,
                    frame_energies: None,
                });
                self.open_capture.remove(&speaker);
                self.push(cut, &speaker, Action::CaptureEnd(id));
            }
            self.run_all(answers, out)?;
        }

        let end = end_hint.unwrap_or(0).max(self.activity_end + self.settings.tail_ms);
        let ids: Vec<ParticipantId> = self.participants.iter().map(|p| p.id.clone()).collect();
        for id in &ids {
            if self.active.contains_key(id) {
                self.finish_online_prompt(id, end, None, out)?;
            }
            let machine = &self.stages[id];
            let (stage, since) = (machine.stage(), machine.since());
            if stage.is_free() {
                let stretch = self.stretches.get_mut(id).expect("open stretch");
                if since < end {
                    stretch.pieces.push((stage, since, end));
                }
                self.close_stretch(id, end, answers, out)?;
            } else if since < end {
                self.emit(id, None, since, end, Payload::StageChange(telemetry::StageChange { stage }))?;
            }
            self.stages.get_mut(id).expect("machine").close(end)?;
        }
        for id in &ids {
            if let Some(v) = self.visibility.get_mut(id).expect("tracker").close(end) {
                self.emit(
                    id,
                    None,
                    v.t_start,
                    v.t_end,
                    Payload::VisibilityChange(telemetry::VisibilityChange {
                        visible: v.visible,
                        cause: v.cause,
                    }),
                )?;
            }
        }
        self.log.close(end)?;
        self.closed = true;
        Ok(end)
    }
}

fn per<T: Clone>(ids: &[ParticipantId], value: T) -> BTreeMap<ParticipantId, T> {
    ids.iter().map(|p| (p.clone(), value.clone())).collect()
}

/// Split a free stretch's base pieces around the learning intervals, merging
/// neighbours that end up with the same stage.
fn overlay(pieces: &[(Stage, Ms, Ms)], learning: &[(Ms, Ms)]) -> Vec<(Stage, Ms, Ms)> {
    let mut cuts: BTreeSet<Ms> = BTreeSet::new();
    for &(_, a, b) in pieces {
        cuts.insert(a);
        cuts.insert(b);
    }
    for &(a, b) in learning {
        cuts.insert(a);
        cuts.insert(b);
    }
    let cuts: Vec<Ms> = cuts.into_iter().collect();
    let mut merged: Vec<(Stage, Ms, Ms)> = Vec::new();
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let Some(base) = pieces.iter().find(|&&(_, s, e)| s <= a && b <= e).map(|p| p.0) else {
            continue;
        };
        let stage = if learning.iter().any(|&(s, e)| s <= a && b <= e && s < e) {
            Stage::Learning
        } else {
            base
        };
        match merged.last_mut() {
            Some(last) if last.0 == stage && last.2 == a => last.2 = b,
            _ => merged.push((stage, a, b)),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_splits_and_merges() {
        let pieces = [(Stage::Waiting, 0, 4000), (Stage::Idle, 4000, 10_000)];
        let learning = [(1000, 3000), (3000, 5000)];
        assert_eq!(
            overlay(&pieces, &learning),
            vec![
                (Stage::Waiting, 0, 1000),
                (Stage::Learning, 1000, 5000),
                (Stage::Idle, 5000, 10_000)
            ]
        );
        assert_eq!(overlay(&pieces, &[]), pieces.to_vec());
    }
}
