use std::collections::HashMap;

use super::EncoderError;
use crate::corpus::Sentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SEP: usize = 2;
pub const SPECIAL_TOKENS: [&str; 3] = ["[PAD]", "[UNK]", "[SEP]"];

/// Lowercased whitespace tokens mapped to dense ids; the special tokens take
/// ids 0..3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

fn normalize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

impl Vocab {
    /// Build from an explicit token list (specials are prepended).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, EncoderError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (id, tok) in all.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(EncoderError::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// All tokens in id order, specials included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids for `text`; unknown tokens map to [`UNK`].
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        normalize(text)
            .map(|t| self.id(&t).unwrap_or(UNK))
            .collect()
    }
}

/// Tokens with frequency >= `min_freq`, most frequent first, ties by token.
pub fn build_vocab(corpus: &[Sentence], min_freq: usize) -> Result<Vocab, EncoderError> {
    build_vocab_from_texts(corpus.iter().map(|s| s.text.as_str()), min_freq)
}

pub fn build_vocab_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    min_freq: usize,
) -> Result<Vocab, EncoderError> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut seen_any = false;
    for text in texts {
        seen_any = true;
        for tok in normalize(text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if !seen_any {
        return Err(EncoderError::EmptyCorpus);
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !SPECIAL_TOKENS.contains(&t.as_str()))
        .collect();
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t))
}
