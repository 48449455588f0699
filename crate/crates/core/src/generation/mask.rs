use rand::Rng;

use super::GenerationError;
use crate::corpus::Sentence;

pub const MASK_TOKEN: &str = "<mask>";

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSentence {
    pub source_id: usize,
    pub tokens: Vec<String>,
    pub mask_rate: f64,
    pub merged: bool,
}

impl MaskedSentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn mask_count(&self) -> usize {
        self.tokens.iter().filter(|t| *t == MASK_TOKEN).count()
    }
}

/// Number of positions to mask: `rate * len` rounded half-up.
///
/// The product is snapped to 1e-9 first so that grid rates such as 0.7 hit
/// exact halves (0.7 * 5 must count as 3.5, not 3.4999...).
pub fn mask_count(rate: f64, len: usize) -> usize {
    let x = rate * len as f64;
    let snapped = (x * 1e9).round() / 1e9;
    ((snapped + 0.5).floor() as usize).min(len)
}

pub fn mask_sentence<R: Rng + ?Sized>(
    sentence: &Sentence,
    rate: f64,
    rng: &mut R,
) -> Result<MaskedSentence, GenerationError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(GenerationError::BadRate(rate));
    }
    let mut tokens: Vec<String> = sentence.text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(GenerationError::EmptySentence(sentence.id));
    }
    let k = mask_count(rate, tokens.len());
    for pos in rand::seq::index::sample(rng, tokens.len(), k) {
        tokens[pos] = MASK_TOKEN.to_string();
    }
    Ok(MaskedSentence {
        source_id: sentence.id,
        tokens,
        mask_rate: rate,
        merged: false,
    })
}

/// Collapse every run of consecutive mask tokens into one.
pub fn merge_adjacent_masks(masked: &MaskedSentence) -> MaskedSentence {
    let mut tokens: Vec<String> = Vec::with_capacity(masked.tokens.len());
    for tok in &masked.tokens {
        if tok == MASK_TOKEN && tokens.last().is_some_and(|t| t == MASK_TOKEN) {
            continue;
        }
        tokens.push(tok.clone());
    }
    MaskedSentence {
        tokens,
        merged: true,
        ..masked.clone()
    }
}
