//! Text normalization shared by the n-gram metrics and the gender lexicon
//! matcher.
//!
//! Tokenization is deliberately simple: lowercase, drop a fixed set of
//! punctuation characters, split on Unicode whitespace. This is not PTB
//! tokenization, so absolute metric values will not match the official
//! COCO caption-evaluation toolkit, but every metric sees the same tokens.

use std::fmt;

mod porter;

pub use porter::stem;

/// Characters removed before splitting.
pub const STRIPPED_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '[', ']'];

/// An ordered sequence of normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.iter().any(|t| t == token)
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Lowercases `text`, strips [`STRIPPED_PUNCTUATION`] and splits on
/// whitespace.
///
/// ```
/// use capbias::tokenize::tokenize;
///
/// let toks = tokenize("A Woman, who is a Doctor.");
/// assert_eq!(toks.to_string(), "a woman who is a doctor");
/// ```
pub fn tokenize(text: &str) -> TokenSeq {
    let cleaned: String = text
        .chars()
        .filter(|c| !STRIPPED_PUNCTUATION.contains(c))
        .flat_map(char::to_lowercase)
        .collect();
    TokenSeq(cleaned.split_whitespace().map(str::to_owned).collect())
}
