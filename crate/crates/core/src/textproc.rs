//! Text normalization and whitespace tokenization.

use serde::{Deserialize, Serialize};

/// Lowercases, strips a configurable character set and collapses whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    strip: Vec<char>,
}

impl Default for Normalizer {
    /// ASCII punctuation minus `<` and `>`, which delimit placeholders like `<user>`.
    fn default() -> Self {
        let strip = (0u8..128).map(char::from).filter(|c| c.is_ascii_punctuation() && *c != '<' && *c != '>').collect();
        Normalizer { strip }
    }
}

impl Normalizer {
    pub fn with_strip_set(strip: impl IntoIterator<Item = char>) -> Self {
        let mut strip: Vec<char> = strip.into_iter().filter(|c| !c.is_whitespace()).collect();
        strip.sort_unstable();
        strip.dedup();
        Normalizer { strip }
    }

    pub fn normalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut pending_space = false;
        for ch in text.chars() {
            if ch.is_whitespace() {
                pending_space = !out.is_empty();
                continue;
            }
            for lower in ch.to_lowercase() {
                if self.strip.contains(&lower) || lower.is_whitespace() {
                    continue;
                }
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(lower);
            }
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> TokenSeq {
        TokenSeq(self.normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect())
    }
}

/// Ordered, non-empty, lowercase tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<String>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl From<Vec<String>> for TokenSeq {
    fn from(v: Vec<String>) -> Self {
        TokenSeq(v)
    }
}

impl<'a> From<&[&'a str]> for TokenSeq {
    fn from(v: &[&'a str]) -> Self {
        TokenSeq(v.iter().map(|s| s.to_string()).collect())
    }
}

/// [`Normalizer::normalize`] with the default strip set.
pub fn normalize(text: &str) -> String {
    Normalizer::default().normalize(text)
}

/// [`Normalizer::tokenize`] with the default strip set.
pub fn tokenize(text: &str) -> TokenSeq {
    Normalizer::default().tokenize(text)
}
