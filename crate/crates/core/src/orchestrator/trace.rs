use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Config, ConfigFileError, LexiconSpec};
use crate::delay_match::speech_bounds;
use crate::model::{create_session, ConfigError, Lang, Ms, Participant, ParticipantId, SessionConfig, Utterance};
use crate::translation::{synthesize_speech, Lexicon};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub id: String,
    pub native_language: Lang,
    pub foreign_language: Lang,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub speaker: String,
    /// Start of capture.
    pub t: Ms,
    pub text: String,
    #[serde(default = "yes")]
    pub translate: bool,
    #[serde(default)]
    pub practice: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<Ms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_energies: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<Lang>,
}

/// A manual self-view override switched on or off at `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideSpec {
    pub participant: String,
    pub t: Ms,
    pub on: bool,
}

/// A scripted conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub session_id: String,
    pub participants: Vec<ParticipantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<LexiconSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<Ms>,
    pub utterances: Vec<UtteranceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideSpec>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("reading trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing trace: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Session(#[from] ConfigError),
    #[error(transparent)]
    Lexicon(#[from] ConfigFileError),
    #[error("utterance `{utterance}` names unknown speaker `{speaker}`")]
    UnknownSpeaker { utterance: String, speaker: String },
    #[error("utterance id `{0}` is used twice")]
    DuplicateUtterance(String),
    #[error("utterance `{0}` has empty text")]
    EmptyText(String),
    #[error("utterance `{0}` starts before an earlier utterance of the same speaker")]
    Unordered(String),
    #[error("utterance `{0}` overlaps the previous utterance of the same speaker")]
    Overlap(String),
    #[error("override at {t} names unknown participant `{participant}`")]
    UnknownOverride { participant: String, t: Ms },
    #[error("no speech detected in the frame energies of utterance `{0}`")]
    NoSpeech(String),
}

/// A trace turned into the session configuration and concrete utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTrace {
    pub session: SessionConfig,
    pub lexicon: Option<Lexicon>,
    pub keywords: Vec<String>,
    pub end_hint: Option<Ms>,
    pub utterances: Vec<Utterance>,
    pub overrides: Vec<(ParticipantId, Ms, bool)>,
}

impl ResolvedTrace {
    pub fn utterances_of(&self, speaker: &ParticipantId) -> impl Iterator<Item = &Utterance> {
        let speaker = speaker.clone();
        self.utterances.iter().filter(move |u| u.speaker == speaker)
    }
}

impl Trace {
    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let mut trace: Trace = serde_json::from_slice(&std::fs::read(path)?)?;
        trace.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(trace)
    }

    /// Validate and materialize utterances. Missing ids become `u001`, `u002`, ...;
    /// the language defaults to the speaker's native one for translated messages
    /// and the foreign one for untranslated and practice ones; the duration defaults to the
    /// speech-synthesis estimate of the text. Frame energies, when present, narrow
    /// the capture to the detected speech.
    pub fn resolve(&self, config: &Config) -> Result<ResolvedTrace, TraceError> {
        let participants: Vec<Participant> = self
            .participants
            .iter()
            .map(|p| Participant::new(&p.id, p.native_language.as_str(), p.foreign_language.as_str()))
            .collect();
        let session = SessionConfig {
            session_id: self.session_id.clone(),
            participants,
        };
        create_session(session.clone())?;
        let lexicon = match &self.lexicon {
            Some(spec) => Some(spec.load(&self.base_dir)?),
            None => config.lexicon()?,
        };

        let rate = config.translation.speech_rate_ms_per_char;
        let mut ids = BTreeSet::new();
        let mut last: BTreeMap<&str, (Ms, Ms)> = BTreeMap::new();
        let mut utterances = Vec::with_capacity(self.utterances.len());
        for (i, spec) in self.utterances.iter().enumerate() {
            let id = spec.id.clone().unwrap_or_else(|| format!("u{:03}", i + 1));
            if !ids.insert(id.clone()) {
                return Err(TraceError::DuplicateUtterance(id));
            }
            let speaker = session
                .participants
                .iter()
                .find(|p| p.id.as_str() == spec.speaker)
                .ok_or_else(|| TraceError::UnknownSpeaker {
                    utterance: id.clone(),
                    speaker: spec.speaker.clone(),
                })?;
            if spec.text.trim().is_empty() {
                return Err(TraceError::EmptyText(id));
            }
            let language = spec.language.clone().unwrap_or_else(|| {
                if spec.translate && !spec.practice {
                    speaker.native_language.clone()
                } else {
                    speaker.foreign_language.clone()
                }
            });
            let (capture_start, capture_end) = match &spec.frame_energies {
                Some(energies) => {
                    let (a, b) =
                        speech_bounds(energies, &config.delay_match.vad).ok_or_else(|| TraceError::NoSpeech(id.clone()))?;
                    (spec.t + a, spec.t + b)
                }
                None => {
                    let duration = match spec.duration_ms {
                        Some(d) => d,
                        None => synthesize_speech(&spec.text, rate).map_err(|_| TraceError::EmptyText(id.clone()))?,
                    };
                    (spec.t, spec.t + duration)
                }
            };
            if let Some(&(prev_t, prev_end)) = last.get(spec.speaker.as_str()) {
                if spec.t < prev_t {
                    return Err(TraceError::Unordered(id));
                }
                if capture_start < prev_end {
                    return Err(TraceError::Overlap(id));
                }
            }
            last.insert(&spec.speaker, (spec.t, capture_end));
            let utterance = Utterance {
                id: id.as_str().into(),
                speaker: speaker.id.clone(),
                language,
                text: spec.text.clone(),
                capture_start,
                capture_end,
                translate_requested: spec.translate,
                practice: spec.practice,
                frame_energies: spec.frame_energies.clone(),
            };
            utterance.check()?;
            utterances.push(utterance);
        }
        let overrides = self
            .overrides
            .iter()
            .map(|o| match session.participants.iter().find(|p| p.id.as_str() == o.participant) {
                Some(p) => Ok((p.id.clone(), o.t, o.on)),
                None => Err(TraceError::UnknownOverride {
                    participant: o.participant.clone(),
                    t: o.t,
                }),
            })
            .collect::<Result<_, _>>()?;
        Ok(ResolvedTrace {
            session,
            lexicon,
            keywords: self.keywords.clone(),
            end_hint: self.end_ms,
            utterances,
            overrides,
        })
    }
}

/// Knobs for [`random_trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTraceParams {
    pub utterances: usize,
    pub translated: f64,
    pub practice: f64,
    pub unknown_word: f64,
    pub with_energies: f64,
    pub max_gap_ms: Ms,
}

impl Default for RandomTraceParams {
    fn default() -> Self {
        Self {
            utterances: 100,
            translated: 0.6,
            practice: 0.15,
            unknown_word: 0.1,
            with_energies: 0.1,
            max_gap_ms: 3000,
        }
    }
}

const UNKNOWN_WORDS: [&str; 5] = ["zorblat", "quixel", "mnamed", "vrooble", "kestrin"];

fn sentence<R: Rng>(rng: &mut R, words: &[&str], unknown: f64) -> String {
    let n = rng.gen_range(2..=6);
    let mut out: Vec<String> = (0..n).map(|_| words.choose(rng).expect("lexicon not empty").to_string()).collect();
    if rng.gen_bool(unknown) {
        let at = rng.gen_range(0..out.len());
        out[at] = UNKNOWN_WORDS.choose(rng).expect("nonempty").to_string();
    }
    if rng.gen_bool(0.5) {
        let first = &mut out[0];
        let mut chars = first.chars();
        if let Some(c) = chars.next() {
            *first = c.to_uppercase().chain(chars).collect();
        }
    }
    let mut s = out.join(" ");
    if rng.gen_bool(0.3) {
        s.push(*['.', '?', '!'].choose(rng).expect("nonempty"));
    }
    s
}

/// Seeded two-party trace mixing translated, untranslated and practice utterances,
/// with overlapping turns across speakers.
pub fn random_trace(seed: u64, lexicon: &Lexicon, params: &RandomTraceParams) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l1, l2) = lexicon.languages();
    let people = [("alice", l1.clone(), l2.clone()), ("bob", l2.clone(), l1.clone())];
    let vocab: BTreeMap<&str, Vec<&str>> = people
        .iter()
        .map(|(id, native, _)| (*id, lexicon.words(native)))
        .collect();
    let foreign_vocab: BTreeMap<&str, Vec<&str>> = people
        .iter()
        .map(|(id, _, foreign)| (*id, lexicon.words(foreign)))
        .collect();

    let mut clock: Ms = rng.gen_range(0..2000);
    let mut free_at: BTreeMap<&str, Ms> = BTreeMap::new();
    let mut utterances = Vec::with_capacity(params.utterances);
    for _ in 0..params.utterances {
        let (speaker, _, _) = people.choose(&mut rng).expect("two people");
        let practice = rng.gen_bool(params.practice);
        let translate = if practice {
            rng.gen_bool(0.5)
        } else {
            rng.gen_bool((params.translated / (1.0 - params.practice).max(f64::EPSILON)).min(1.0))
        };
        let words = if translate { &vocab[speaker] } else { &foreign_vocab[speaker] };
        let text = sentence(&mut rng, words, params.unknown_word);

        clock += rng.gen_range(0..=params.max_gap_ms);
        let t = clock.max(free_at.get(speaker).copied().unwrap_or(0));
        let nominal = synthesize_speech(&text, 60).unwrap_or(200) + rng.gen_range(0..500);
        let (duration_ms, frame_energies, span) = if rng.gen_bool(params.with_energies) {
            let lead = rng.gen_range(0..5usize);
            let speech = (nominal / 20) as usize;
            let mut energies = vec![0.01f32; lead];
            energies.extend((0..speech).map(|_| rng.gen_range(0.2f32..0.9)));
            energies.extend(std::iter::repeat_n(0.01f32, 10));
            let span = energies.len() as Ms * 20;
            (None, Some(energies), span)
        } else {
            (Some(nominal), None, nominal)
        };
        free_at.insert(speaker, t + span + rng.gen_range(100..800));
        utterances.push(UtteranceSpec {
            id: None,
            speaker: speaker.to_string(),
            t,
            text,
            translate,
            practice,
            duration_ms,
            frame_energies,
            language: None,
        });
    }
    let mut keywords: Vec<String> = vocab["alice"].choose_multiple(&mut rng, 3).map(|w| w.to_string()).collect();
    keywords.sort();
    Trace {
        session_id: format!("random-{seed}"),
        participants: people
            .iter()
            .map(|(id, native, foreign)| ParticipantSpec {
                id: id.to_string(),
                native_language: native.clone(),
                foreign_language: foreign.clone(),
            })
            .collect(),
        lexicon: Some(LexiconSpec::inline(lexicon)),
        keywords,
        end_ms: None,
        utterances,
        overrides: Vec::new(),
        base_dir: PathBuf::new(),
    }
}
