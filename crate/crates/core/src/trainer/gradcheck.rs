use rand::Rng;

use super::{loss_and_gradients, Batch, LossKind, ScoredTriplet};
use crate::corpus::{Provenance, ScoredPair};
use crate::encoder::{EncoderParams, Vocab};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub dim: usize,
    pub batch: usize,
    pub vocab_tokens: usize,
    pub temperature: f64,
    /// Finite-difference step for the five-point stencil.
    pub step: f64,
    /// Gradients smaller than this are compared absolutely.
    pub floor: f64,
    pub exec: Exec,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            batch: 3,
            vocab_tokens: 8,
            temperature: 0.05,
            step: 1e-4,
            floor: 1e-6,
            exec: Exec::default(),
        }
    }
}

/// Max relative error between analytic and finite-difference gradients on a
/// random instance of size d=4, N=3.
pub fn grad_check<R: Rng + ?Sized>(kind: LossKind, rng: &mut R) -> f64 {
    grad_check_with(kind, &GradCheckConfig::default(), rng)
}

fn random_sentence<R: Rng + ?Sized>(vocab: &Vocab, rng: &mut R) -> String {
    let len = rng.random_range(1..=4);
    let words: Vec<&str> = (0..len)
        .map(|_| vocab.tokens()[rng.random_range(crate::encoder::SPECIAL_TOKENS.len()..vocab.len())].as_str())
        .collect();
    words.join(" ")
}

pub fn grad_check_with<R: Rng + ?Sized>(kind: LossKind, cfg: &GradCheckConfig, rng: &mut R) -> f64 {
    let vocab = Vocab::from_tokens((0..cfg.vocab_tokens).map(|i| format!("w{i}"))).expect("distinct tokens");
    let mut params = EncoderParams::zeros(vocab.len(), cfg.dim);
    for i in 0..params.num_values() {
        params.set_flat(i, rng.random_range(-0.5..0.5));
    }
    let pairs: Vec<ScoredPair> = (0..cfg.batch)
        .map(|_| {
            let a = random_sentence(&vocab, rng);
            let b = random_sentence(&vocab, rng);
            ScoredPair::nli(a, b, rng.random_range(0.0..=1.0), Provenance::NliPositive)
        })
        .collect();
    let trips: Vec<ScoredTriplet> = pairs
        .iter()
        .map(|p| ScoredTriplet {
            anchor: p.a.clone(),
            positive: p.b.clone(),
            negative: random_sentence(&vocab, rng),
            score: p.score,
        })
        .collect();
    let pair_refs: Vec<&ScoredPair> = pairs.iter().collect();
    let trip_refs: Vec<&ScoredTriplet> = trips.iter().collect();
    let batch = if kind.uses_triplets() {
        Batch::Triplets(&trip_refs)
    } else {
        Batch::Pairs(&pair_refs)
    };
    let eval = |p: &EncoderParams| {
        loss_and_gradients(kind, batch, p, &vocab, cfg.temperature, Exec::Sequential)
            .expect("random instance is well formed")
    };
    let (_, analytic) = eval(&params);

    let errors = cfg.exec.map_range(params.num_values(), |i| {
        let mut p = params.clone();
        let x = p.get_flat(i);
        let h = cfg.step;
        let mut at = |offset: f64| {
            p.set_flat(i, x + offset);
            eval(&p).0
        };
        let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        let a = analytic.get_flat(i);
        (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor)
    });
    errors.into_iter().fold(0.0, f64::max)
}
