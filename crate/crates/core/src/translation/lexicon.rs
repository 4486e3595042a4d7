use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::model::Lang;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon word `{0}` is not a single word")]
    BadWord(String),
    #[error("lexicon is not a bijection: `{0}` has two preimages")]
    NotBijective(String),
    #[error("lexicon languages must differ")]
    SameLanguage,
    #[error("lexicon file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("lexicon file: {0}")]
    Io(#[from] std::io::Error),
}

/// Bijective word map between two languages. Lookups ignore case and return lowercase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    first: Lang,
    second: Lang,
    forward: BTreeMap<String, String>,
    backward: BTreeMap<String, String>,
}

fn valid_word(w: &str) -> bool {
    !w.is_empty()
        && !w.chars().any(char::is_whitespace)
        && w.chars().next().is_some_and(char::is_alphanumeric)
        && w.chars().last().is_some_and(char::is_alphanumeric)
}

impl Lexicon {
    pub fn new<I, A, B>(first: Lang, second: Lang, pairs: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        if first == second {
            return Err(LexiconError::SameLanguage);
        }
        let mut forward = BTreeMap::new();
        let mut backward = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (a.as_ref().to_lowercase(), b.as_ref().to_lowercase());
            for w in [&a, &b] {
                if !valid_word(w) {
                    return Err(LexiconError::BadWord(w.clone()));
                }
            }
            if forward.contains_key(&a) {
                return Err(LexiconError::NotBijective(a));
            }
            if backward.contains_key(&b) {
                return Err(LexiconError::NotBijective(b));
            }
            forward.insert(a.clone(), b.clone());
            backward.insert(b, a);
        }
        Ok(Self {
            first,
            second,
            forward,
            backward,
        })
    }

    /// A JSON object of word pairs, keys in `first`, values in `second`.
    pub fn from_json(bytes: &[u8], first: Lang, second: Lang) -> Result<Self, LexiconError> {
        let entries: BTreeMap<String, String> = serde_json::from_slice(bytes)?;
        Self::new(first, second, entries)
    }

    pub fn load(path: &Path, first: Lang, second: Lang) -> Result<Self, LexiconError> {
        Self::from_json(&std::fs::read(path)?, first, second)
    }

    pub fn languages(&self) -> (&Lang, &Lang) {
        (&self.first, &self.second)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.forward.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    fn table(&self, src: &Lang, dst: &Lang) -> Option<&BTreeMap<String, String>> {
        if *src == self.first && *dst == self.second {
            Some(&self.forward)
        } else if *src == self.second && *dst == self.first {
            Some(&self.backward)
        } else {
            None
        }
    }

    pub fn supports(&self, src: &Lang, dst: &Lang) -> bool {
        self.table(src, dst).is_some()
    }

    pub fn lookup(&self, word: &str, src: &Lang, dst: &Lang) -> Option<&str> {
        self.table(src, dst)?.get(&word.to_lowercase()).map(String::as_str)
    }

    /// Words of `lang`, sorted.
    pub fn words(&self, lang: &Lang) -> Vec<&str> {
        if *lang == self.first {
            self.forward.keys().map(String::as_str).collect()
        } else if *lang == self.second {
            self.backward.keys().map(String::as_str).collect()
        } else {
            Vec::new()
        }
    }

    /// Every word of `text` is known in `lang`.
    pub fn covers(&self, text: &str, lang: &Lang) -> bool {
        let table = if *lang == self.first {
            &self.forward
        } else if *lang == self.second {
            &self.backward
        } else {
            return false;
        };
        text.split_whitespace().all(|token| {
            let (_, core, _) = split_token(token);
            core.is_empty() || table.contains_key(&core.to_lowercase())
        })
    }
}

/// Split a token into leading punctuation, word core and trailing punctuation.
pub(crate) fn split_token(token: &str) -> (&str, &str, &str) {
    let start = token.find(char::is_alphanumeric).unwrap_or(token.len());
    let end = token
        .rfind(char::is_alphanumeric)
        .map_or(start, |i| i + token[i..].chars().next().map_or(0, char::len_utf8));
    let end = end.max(start);
    (&token[..start], &token[start..end], &token[end..])
}
