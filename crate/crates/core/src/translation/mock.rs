use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexicon::{split_token, Lexicon};
use crate::model::{Lang, Ms, Utterance};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranslateError {
    #[error("unsupported language pair {src} -> {dst}")]
    UnsupportedPair { src: Lang, dst: Lang },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpeechError {
    #[error("cannot synthesize speech for empty text")]
    EmptyText,
    #[error("speech rate must be positive")]
    ZeroRate,
}

pub const UNKNOWN_OPEN: char = '⟦';
pub const UNKNOWN_CLOSE: char = '⟧';

/// Mock speech recognition: returns the ground-truth transcript.
pub fn transcribe(utterance: &Utterance) -> String {
    utterance.text.clone()
}

/// Word-by-word translation through the lexicon.
///
/// Tokens are split on whitespace and keep their surrounding punctuation; words
/// missing from the lexicon come out as `⟦word⟧`. Output is lowercase and
/// single-space separated.
pub fn translate(text: &str, src: &Lang, dst: &Lang, lexicon: &Lexicon) -> Result<String, TranslateError> {
    if !lexicon.supports(src, dst) {
        return Err(TranslateError::UnsupportedPair {
            src: src.clone(),
            dst: dst.clone(),
        });
    }
    let words: Vec<String> = text
        .split_whitespace()
        .map(|token| {
            let (pre, core, post) = split_token(token);
            if core.is_empty() {
                return token.to_lowercase();
            }
            let mapped = match lexicon.lookup(core, src, dst) {
                Some(w) => w.to_owned(),
                None => format!("{UNKNOWN_OPEN}{}{UNKNOWN_CLOSE}", core.to_lowercase()),
            };
            format!("{}{mapped}{}", pre.to_lowercase(), post.to_lowercase())
        })
        .collect();
    Ok(words.join(" "))
}

pub const MIN_SPEECH_MS: Ms = 200;

/// Duration of synthesized speech: characters (without unknown-word markers) × rate,
/// never below 200 ms.
pub fn synthesize_speech(text: &str, rate_ms_per_char: Ms) -> Result<Ms, SpeechError> {
    if rate_ms_per_char == 0 {
        return Err(SpeechError::ZeroRate);
    }
    if text.trim().is_empty() {
        return Err(SpeechError::EmptyText);
    }
    let chars = text
        .chars()
        .filter(|c| *c != UNKNOWN_OPEN && *c != UNKNOWN_CLOSE)
        .count() as Ms;
    Ok((chars * rate_ms_per_char).max(MIN_SPEECH_MS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Jitter {
    #[default]
    None,
    Uniform {
        bound_ms: u64,
    },
}

/// Translation delay: `base + per_char × chars + jitter`, never negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub base_ms: Ms,
    pub per_char_ms: Ms,
    pub jitter: Jitter,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_ms: 500,
            per_char_ms: 20,
            jitter: Jitter::Uniform { bound_ms: 100 },
        }
    }
}

/// Draws from `rng` only when the jitter bound is nonzero, so a jitter-free model
/// leaves the seed stream untouched.
pub fn latency<R: Rng + ?Sized>(model: &LatencyModel, text: &str, rng: &mut R) -> Ms {
    let nominal = model.base_ms + model.per_char_ms * text.chars().count() as Ms;
    match model.jitter {
        Jitter::Uniform { bound_ms } if bound_ms > 0 => {
            let b = bound_ms as i64;
            let delta = rng.gen_range(-b..=b);
            (nominal as i64 + delta).max(0) as Ms
        }
        _ => nominal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lex() -> Lexicon {
        Lexicon::new("en".into(), "fr".into(), [("hello", "bonjour"), ("world", "monde")]).unwrap()
    }

    fn en() -> Lang {
        "en".into()
    }

    fn fr() -> Lang {
        "fr".into()
    }

    #[test]
    fn transcribe_is_identity() {
        let u = Utterance {
            id: "u1".into(),
            speaker: "a".into(),
            language: "en".into(),
            text: "Hello World".into(),
            capture_start: 0,
            capture_end: 1,
            translate_requested: true,
            practice: false,
            frame_energies: None,
        };
        assert_eq!(transcribe(&u), "Hello World");
    }

    #[test]
    fn word_by_word() {
        assert_eq!(translate("hello world", &en(), &fr(), &lex()).unwrap(), "bonjour monde");
        assert_eq!(translate("Hello, World!", &en(), &fr(), &lex()).unwrap(), "bonjour, monde!");
    }

    #[test]
    fn unknown_words_bracketed() {
        assert_eq!(translate("hello xyzzy", &en(), &fr(), &lex()).unwrap(), "bonjour ⟦xyzzy⟧");
    }

    #[test]
    fn unsupported_pair() {
        assert_eq!(
            translate("hello", &en(), &"de".into(), &lex()),
            Err(TranslateError::UnsupportedPair { src: en(), dst: "de".into() })
        );
    }

    #[test]
    fn speech_duration() {
        assert_eq!(synthesize_speech("bonjour monde", 60), Ok(780));
        assert_eq!(synthesize_speech("a", 60), Ok(200));
        assert_eq!(synthesize_speech("⟦ab⟧", 100), Ok(200));
        assert_eq!(synthesize_speech("⟦abc⟧", 100), Ok(300));
        assert_eq!(synthesize_speech("", 60), Err(SpeechError::EmptyText));
        assert_eq!(synthesize_speech("x", 0), Err(SpeechError::ZeroRate));
    }

    #[test]
    fn latency_arithmetic() {
        let model = LatencyModel {
            base_ms: 500,
            per_char_ms: 20,
            jitter: Jitter::None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(latency(&model, "0123456789", &mut rng), 700);
    }

    #[test]
    fn zero_jitter_ignores_seed() {
        let model = LatencyModel {
            base_ms: 100,
            per_char_ms: 5,
            jitter: Jitter::Uniform { bound_ms: 0 },
        };
        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|i| latency(&model, &"x".repeat(i), &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draws(1), draws(99));
    }

    #[test]
    fn equal_seeds_equal_latencies() {
        let model = LatencyModel::default();
        let draws = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|i| latency(&model, &"y".repeat(i), &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draws(7), draws(7));
        assert_ne!(draws(7), draws(8));
        for (i, d) in draws(3).into_iter().enumerate() {
            let nominal = 500 + 20 * i as u64;
            assert!(d + 100 >= nominal && d <= nominal + 100);
        }
    }

    proptest! {
        #[test]
        fn speech_monotone_in_length(a in 1usize..300, b in 1usize..300, rate in 1u64..200) {
            let (short, long) = (a.min(b), a.max(b));
            let ds = synthesize_speech(&"x".repeat(short), rate).unwrap();
            let dl = synthesize_speech(&"x".repeat(long), rate).unwrap();
            prop_assert!(ds <= dl);
        }

        #[test]
        fn latency_never_negative(base in 0u64..50, bound in 0u64..500, seed: u64) {
            let model = LatencyModel { base_ms: base, per_char_ms: 0, jitter: Jitter::Uniform { bound_ms: bound } };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = latency(&model, "", &mut rng);
            prop_assert!(d <= base + bound);
        }
    }
}
