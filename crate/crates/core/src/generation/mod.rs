//! Two-step pair production: mask sentences and have the LLM reconstruct
//! them, then have the LLM score each (original, reconstruction) pair.
//! Also random zero-score negatives and NLI pair construction.
//!
//! All randomness is drawn up front by [`plan_generation`], before any
//! completion is requested, so a fixed seed fixes every prompt regardless of
//! how the completions are scheduled.

mod mask;
mod prompt;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{GeneratedPair, NliTriplet, Provenance, ScoredPair, Sentence};
use crate::gateway::{
    parse_similarity_score, Completer, CompletionRequest, CompletionResponse, GatewayError,
};

pub use mask::{mask_count, mask_sentence, merge_adjacent_masks, MaskedSentence, MASK_TOKEN};
pub use prompt::{
    render_generation_prompt, render_scoring_prompt, PromptTemplate, TemplateName, MASK_FILL,
    PARAPHRASE, SCORE,
};

/// The nine mask rates applied to every original sentence.
pub const DEFAULT_MASK_RATES: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("sentence {0} is empty")]
    EmptySentence(usize),
    #[error("mask rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error("merge probability {0} outside [0, 1]")]
    BadMergeProbability(f64),
    #[error("corpus of {size} sentences is too small for {k} negatives per sentence")]
    CorpusTooSmall { size: usize, k: usize },
    #[error("{context}: {source}")]
    Gateway {
        context: String,
        #[source]
        source: GatewayError,
    },
    #[error("emitted pair {index} violates record invariants: {message}")]
    Invalid { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mask_rates: Vec<f64>,
    pub merge_probability: f64,
    pub negatives_per_sentence: usize,
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mask_rates: DEFAULT_MASK_RATES.to_vec(),
            merge_probability: 0.5,
            negatives_per_sentence: 2,
            rng_seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if let Some(&r) = self.mask_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(GenerationError::BadRate(r));
        }
        if !(0.0..=1.0).contains(&self.merge_probability) {
            return Err(GenerationError::BadMergeProbability(self.merge_probability));
        }
        Ok(())
    }
}

/// One reconstruction request, fully determined before any network call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPrompt {
    pub sentence_index: usize,
    pub rate_index: usize,
    pub masked: MaskedSentence,
    pub prompt: String,
}

/// Draw masks and merge decisions for every (sentence, rate), in that order.
pub fn plan_generation<R: Rng + ?Sized>(
    sentences: &[Sentence],
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<Vec<PlannedPrompt>, GenerationError> {
    config.validate()?;
    let mut plan = Vec::with_capacity(sentences.len() * config.mask_rates.len());
    for (sentence_index, sentence) in sentences.iter().enumerate() {
        for (rate_index, &rate) in config.mask_rates.iter().enumerate() {
            let mut masked = mask_sentence(sentence, rate, rng)?;
            if rng.random_bool(config.merge_probability) {
                masked = merge_adjacent_masks(&masked);
            }
            let prompt = render_generation_prompt(&masked, sentence);
            plan.push(PlannedPrompt {
                sentence_index,
                rate_index,
                masked,
                prompt,
            });
        }
    }
    Ok(plan)
}

/// Strip surrounding whitespace and one layer of matching quotes.
pub fn clean_completion(text: &str) -> String {
    let t = text.trim();
    let unquoted = ['"', '\'']
        .iter()
        .find_map(|&q| {
            t.strip_prefix(q)
                .and_then(|rest| rest.strip_suffix(q))
        })
        .unwrap_or(t);
    unquoted.trim().to_string()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutput {
    pub pairs: Vec<GeneratedPair>,
    /// Completions that were empty after cleanup.
    pub dropped: usize,
}

pub fn generate_pairs<R: Rng + ?Sized, C: Completer + ?Sized>(
    sentences: &[Sentence],
    config: &PipelineConfig,
    gateway: &C,
    rng: &mut R,
) -> Result<GenerationOutput, GenerationError> {
    let plan = plan_generation(sentences, config, rng)?;
    let requests: Vec<CompletionRequest> = plan
        .iter()
        .map(|p| CompletionRequest::generation(p.prompt.clone()))
        .collect();
    let responses = complete_in_order(gateway, &requests, |i| {
        let p = &plan[i];
        format!(
            "sentence {} at mask rate {}",
            sentences[p.sentence_index].id, config.mask_rates[p.rate_index]
        )
    })?;

    let mut out = GenerationOutput::default();
    for (p, resp) in plan.iter().zip(responses) {
        let sentence = &sentences[p.sentence_index];
        let generated = clean_completion(&resp.text);
        if generated.is_empty() {
            log::warn!(
                "empty completion for sentence {} at mask rate {}; dropping",
                sentence.id,
                p.masked.mask_rate
            );
            out.dropped += 1;
            continue;
        }
        out.pairs.push(GeneratedPair {
            a: sentence.text.clone(),
            b: generated,
            mask_rate: p.masked.mask_rate,
        });
    }
    Ok(out)
}

/// Score each `(a, b)`; `None` where the completion did not parse.
pub fn score_pairs<C: Completer + ?Sized>(
    pairs: &[(String, String)],
    gateway: &C,
) -> Result<Vec<Option<f64>>, GenerationError> {
    let requests: Vec<CompletionRequest> = pairs
        .iter()
        .map(|(a, b)| CompletionRequest::scoring(render_scoring_prompt(a, b)))
        .collect();
    let responses = complete_in_order(gateway, &requests, |i| format!("pair {i}"))?;
    Ok(responses
        .iter()
        .enumerate()
        .map(|(i, resp)| match parse_similarity_score(&resp.text) {
            Ok(score) => Some(score),
            Err(e) => {
                log::warn!("pair {i}: {e}; dropping");
                None
            }
        })
        .collect())
}

fn emit(index: usize, pair: ScoredPair) -> Result<ScoredPair, GenerationError> {
    pair.validate()
        .map_err(|message| GenerationError::Invalid { index, message })?;
    Ok(pair)
}

/// Score generated pairs; pairs whose score does not parse are dropped.
pub fn label_scores<C: Completer + ?Sized>(
    pairs: &[GeneratedPair],
    gateway: &C,
) -> Result<Vec<ScoredPair>, GenerationError> {
    let texts: Vec<(String, String)> = pairs.iter().map(|p| (p.a.clone(), p.b.clone())).collect();
    let scores = score_pairs(&texts, gateway)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (i, (pair, score)) in pairs.iter().zip(scores).enumerate() {
        if let Some(score) = score {
            out.push(emit(
                i,
                ScoredPair::generated(pair.a.clone(), pair.b.clone(), score, pair.mask_rate),
            )?);
        }
    }
    Ok(out)
}

/// For each sentence, `k` distinct partners drawn uniformly from the rest of
/// the corpus, all with score 0.
pub fn sample_zero_negatives<R: Rng + ?Sized>(
    sentences: &[Sentence],
    k: usize,
    rng: &mut R,
) -> Result<Vec<ScoredPair>, GenerationError> {
    let n = sentences.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if n < k + 1 {
        return Err(GenerationError::CorpusTooSmall { size: n, k });
    }
    let mut out = Vec::with_capacity(n * k);
    for (i, s) in sentences.iter().enumerate() {
        for j in rand::seq::index::sample(rng, n - 1, k) {
            let partner = if j >= i { j + 1 } else { j };
            out.push(emit(
                out.len(),
                ScoredPair::random_negative(s.text.clone(), sentences[partner].text.clone()),
            )?);
        }
    }
    Ok(out)
}

pub type TextPair = (String, String);

/// Index-aligned (premise, entailment) positives and (premise, contradiction)
/// hard negatives.
pub fn build_nli_pairs(triplets: &[NliTriplet]) -> (Vec<TextPair>, Vec<TextPair>) {
    triplets
        .iter()
        .map(|t| {
            (
                (t.premise.clone(), t.entailment.clone()),
                (t.premise.clone(), t.contradiction.clone()),
            )
        })
        .unzip()
}

pub fn label_nli_positives<C: Completer + ?Sized>(
    positives: &[TextPair],
    gateway: &C,
) -> Result<Vec<ScoredPair>, GenerationError> {
    let scores = score_pairs(positives, gateway)?;
    let mut out = Vec::with_capacity(positives.len());
    for (i, ((a, b), score)) in positives.iter().zip(scores).enumerate() {
        if let Some(score) = score {
            out.push(emit(i, ScoredPair::nli(a.clone(), b.clone(), score, Provenance::NliPositive))?);
        }
    }
    Ok(out)
}

/// Score NLI positives and keep each surviving positive's hard negative
/// alongside it, so the two lists stay index-aligned. Hard negatives are not
/// sent for scoring and carry score 0.
pub fn label_nli_triplets<C: Completer + ?Sized>(
    triplets: &[NliTriplet],
    gateway: &C,
) -> Result<(Vec<ScoredPair>, Vec<ScoredPair>), GenerationError> {
    let (positives, negatives) = build_nli_pairs(triplets);
    let scores = score_pairs(&positives, gateway)?;
    let mut pos_out = Vec::new();
    let mut neg_out = Vec::new();
    for (i, score) in scores.into_iter().enumerate() {
        if let Some(score) = score {
            let (a, b) = &positives[i];
            pos_out.push(emit(i, ScoredPair::nli(a.clone(), b.clone(), score, Provenance::NliPositive))?);
            let (a, b) = &negatives[i];
            neg_out.push(emit(i, ScoredPair::nli(a.clone(), b.clone(), 0.0, Provenance::NliHardNegative))?);
        }
    }
    Ok((pos_out, neg_out))
}

/// Run requests with up to `gateway.max_concurrency()` in flight, returning
/// responses in input order. After the first failure no new requests start;
/// the earliest failing index is reported with `context(index)`.
pub fn complete_in_order<C, F>(
    gateway: &C,
    requests: &[CompletionRequest],
    context: F,
) -> Result<Vec<CompletionResponse>, GenerationError>
where
    C: Completer + ?Sized,
    F: Fn(usize) -> String,
{
    let workers = gateway.max_concurrency().max(1).min(requests.len().max(1));
    let slots: Vec<Mutex<Option<Result<CompletionResponse, GatewayError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();

    if workers == 1 {
        for (i, req) in requests.iter().enumerate() {
            let r = gateway.complete(req);
            let failed = r.is_err();
            *slots[i].lock().expect("slot lock") = Some(r);
            if failed {
                break;
            }
        }
    } else {
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let r = gateway.complete(&requests[i]);
                    if r.is_err() {
                        abort.store(true, Ordering::SeqCst);
                    }
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
    }

    let mut out = Vec::with_capacity(requests.len());
    let mut missing = false;
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(resp)) => out.push(resp),
            Some(Err(source)) => {
                return Err(GenerationError::Gateway {
                    context: context(i),
                    source,
                })
            }
            None => missing = true,
        }
    }
    // Unstarted slots only exist after a failure, which returned above.
    debug_assert!(!missing);
    Ok(out)
}
