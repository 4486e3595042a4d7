use serde::{Deserialize, Serialize};

/// Lowercase and collapse runs of whitespace to single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Character-level edit distance, two-row dynamic programme.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub similarity: f64,
    pub correct: bool,
}

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// `1 − distance / longer length` over normalized text; correct at or above `threshold`.
pub fn grade_text(expected: &str, answer: &str, threshold: f64) -> Grade {
    let (e, a) = (normalize(expected), normalize(answer));
    let longest = e.chars().count().max(a.chars().count());
    let similarity = if longest == 0 {
        1.0
    } else {
        1.0 - levenshtein(&a, &e) as f64 / longest as f64
    };
    Grade {
        similarity,
        correct: similarity >= threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match() {
        let g = grade_text("bonjour monde", "bonjour monde", DEFAULT_THRESHOLD);
        assert_eq!(g.similarity, 1.0);
        assert!(g.correct);
    }

    #[test]
    fn one_missing_char() {
        let g = grade_text("bonjour monde", "bonjour mond", DEFAULT_THRESHOLD);
        assert_eq!(g.similarity, 1.0 - 1.0 / 13.0);
        assert!((g.similarity - 0.923).abs() < 1e-3);
        assert!(g.correct);
    }

    #[test]
    fn empty_answer() {
        let g = grade_text("bonjour monde", "", DEFAULT_THRESHOLD);
        assert_eq!(g.similarity, 0.0);
        assert!(!g.correct);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Bonjour \t  MONDE\n"), "bonjour monde");
        assert!(grade_text("bonjour monde", "BONJOUR   monde", DEFAULT_THRESHOLD).similarity == 1.0);
    }

    #[test]
    fn distance_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("été", "ete"), 2);
    }
}
