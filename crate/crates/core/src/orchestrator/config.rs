use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay_match::{AlignPolicy, VadParams};
use crate::learning::ExerciseTiming;
use crate::model::{Lang, Ms};
use crate::telemetry::IncentiveConfig;
use crate::translation::{LatencyModel, Lexicon, LexiconError, MockBackend, RemoteBackend, TranslationBackend};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("lexicon needs exactly one of `path` or `pairs`")]
    LexiconSource,
    #[error("remote translation needs an endpoint")]
    MissingEndpoint,
    #[error("mock translation needs a lexicon")]
    MissingLexicon,
}

/// Where a lexicon comes from: a JSON file of word pairs or pairs given inline.
/// Keys are words of the first language, values words of the second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSpec {
    pub languages: (Lang, Lang),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<BTreeMap<String, String>>,
}

impl LexiconSpec {
    pub fn inline(lexicon: &Lexicon) -> Self {
        let (a, b) = lexicon.languages();
        Self {
            languages: (a.clone(), b.clone()),
            path: None,
            pairs: Some(lexicon.entries().map(|(x, y)| (x.to_owned(), y.to_owned())).collect()),
        }
    }

    /// Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Lexicon, ConfigFileError> {
        let (first, second) = self.languages.clone();
        match (&self.path, &self.pairs) {
            (Some(path), None) => Ok(Lexicon::load(&base_dir.join(path), first, second)?),
            (None, Some(pairs)) => Ok(Lexicon::new(first, second, pairs)?),
            _ => Err(ConfigFileError::LexiconSource),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationMode {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationConfig {
    pub mode: TranslationMode,
    pub endpoint: Option<String>,
    pub lexicon: Option<LexiconSpec>,
    pub speech_rate_ms_per_char: Ms,
    pub latency: LatencyModel,
    pub timeout_ms: Ms,
    pub retries: u32,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            mode: TranslationMode::Mock,
            endpoint: None,
            lexicon: None,
            speech_rate_ms_per_char: 60,
            latency: LatencyModel::default(),
            timeout_ms: 2000,
            retries: 1,
        }
    }
}

impl TranslationConfig {
    /// The backend this configuration selects. The lexicon is needed by the mock
    /// backend only.
    pub fn backend(&self, lexicon: Option<&Lexicon>) -> Result<Box<dyn TranslationBackend>, ConfigFileError> {
        match self.mode {
            TranslationMode::Mock => {
                let lexicon = lexicon.ok_or(ConfigFileError::MissingLexicon)?;
                Ok(Box::new(MockBackend::new(lexicon.clone())))
            }
            TranslationMode::Remote => {
                let endpoint = self.endpoint.as_deref().ok_or(ConfigFileError::MissingEndpoint)?;
                Ok(Box::new(RemoteBackend::new(
                    endpoint,
                    Duration::from_millis(self.timeout_ms),
                    self.retries,
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayMatchConfig {
    pub policy: AlignPolicy,
    pub min_window_ms: Ms,
    pub vad: VadParams,
    /// Quiet time kept after the last activity before the session ends.
    pub tail_ms: Ms,
}

impl Default for DelayMatchConfig {
    fn default() -> Self {
        Self {
            policy: AlignPolicy::FreezePad,
            min_window_ms: 3000,
            vad: VadParams::default(),
            tail_ms: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub answer_allowance_ms: Ms,
    pub recognize_choices: usize,
    /// Probability that the simulated learner answers a prompt exactly.
    pub learner_accuracy: f64,
    pub incentive: IncentiveConfig,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.8,
            answer_allowance_ms: 2000,
            recognize_choices: 4,
            learner_accuracy: 0.75,
            incentive: IncentiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub port: u16,
    pub log_dir: PathBuf,
    pub clock: ClockMode,
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            log_dir: PathBuf::from("logs"),
            clock: ClockMode::Virtual,
            seed: 0,
        }
    }
}

/// Everything configurable, as read from the JSON config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub translation: TranslationConfig,
    pub delay_match: DelayMatchConfig,
    pub learning: LearningConfig,
    pub server: ServerConfig,
    /// Directory that relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigFileError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: Config = serde_json::from_slice(&bytes).map_err(|source| ConfigFileError::Json {
            path: path.to_owned(),
            source,
        })?;
        config.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(config)
    }

    pub fn timing(&self) -> ExerciseTiming {
        ExerciseTiming {
            speech_rate_ms_per_char: self.translation.speech_rate_ms_per_char,
            answer_allowance_ms: self.learning.answer_allowance_ms,
        }
    }

    pub fn lexicon(&self) -> Result<Option<Lexicon>, ConfigFileError> {
        self.translation
            .lexicon
            .as_ref()
            .map(|spec| spec.load(&self.base_dir))
            .transpose()
    }
}
