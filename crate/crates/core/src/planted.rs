//! Synthetic data from a hidden ground-truth encoder.
//!
//! Every token is one surface form of a latent concept. A token's hidden
//! vector is its concept vector plus a little noise, and a sentence's hidden
//! embedding is the mean over its tokens. Pairs are built by keeping some
//! concepts and swapping the rest, always with fresh surface forms, so that a
//! model has to discover which forms share a concept before it can rank
//! pairs.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::corpus::{ScoredPair, StsExample};
use crate::encoder::Vocab;
use crate::generation::DEFAULT_MASK_RATES;
use crate::trainer::ScoredTriplet;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub concepts: usize,
    pub forms_per_concept: usize,
    pub dim: usize,
    pub token_noise: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub label_noise: f64,
    /// Share of pairs whose second sentence is unrelated.
    pub independent_fraction: f64,
    /// Concepts of source sentences follow `1 / (rank+1)^s`.
    pub zipf_exponent: f64,
    /// Chance that a kept concept is rewritten with another surface form.
    pub form_change: f64,
    pub rates: Vec<f64>,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            concepts: 40,
            forms_per_concept: 5,
            dim: 16,
            token_noise: 0.1,
            min_len: 6,
            max_len: 10,
            label_noise: 0.05,
            independent_fraction: 2.0 / 11.0,
            zipf_exponent: 1.2,
            form_change: 1.0,
            rates: DEFAULT_MASK_RATES.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedModel {
    config: PlantedConfig,
    words: Vec<String>,
    table: Array2<f64>,
    zipf: WeightedIndex<f64>,
}

/// Token as `(concept, form)`.
pub type PlantedToken = (usize, usize);

impl PlantedModel {
    pub fn new<R: Rng + ?Sized>(config: PlantedConfig, rng: &mut R) -> Self {
        assert!(config.concepts > 1 && config.forms_per_concept > 1, "need several concepts and forms");
        assert!(config.min_len >= 1 && config.min_len <= config.max_len);
        let n = config.concepts * config.forms_per_concept;
        let mut table = Array2::zeros((n, config.dim));
        for c in 0..config.concepts {
            let concept: Array1<f64> = (0..config.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for f in 0..config.forms_per_concept {
                let mut row = table.row_mut(c * config.forms_per_concept + f);
                for (k, v) in row.iter_mut().enumerate() {
                    *v = concept[k] + config.token_noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let words = (0..config.concepts)
            .flat_map(|c| (0..config.forms_per_concept).map(move |f| format!("c{c}f{f}")))
            .collect();
        let zipf = WeightedIndex::new((0..config.concepts).map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent)))
            .expect("positive weights");
        Self {
            config,
            words,
            table,
            zipf,
        }
    }

    pub fn config(&self) -> &PlantedConfig {
        &self.config
    }

    /// Every surface form; concept-major order.
    pub fn vocab(&self) -> Vocab {
        Vocab::from_tokens(self.words.iter()).expect("distinct words")
    }

    fn index(&self, (c, f): PlantedToken) -> usize {
        c * self.config.forms_per_concept + f
    }

    pub fn text(&self, tokens: &[PlantedToken]) -> String {
        tokens.iter().map(|&t| self.words[self.index(t)].as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PlantedToken> {
        let len = rng.random_range(self.config.min_len..=self.config.max_len);
        (0..len)
            .map(|_| (self.zipf.sample(rng), rng.random_range(0..self.config.forms_per_concept)))
            .collect()
    }

    /// Replace `round(rate·len)` concepts with uniformly drawn ones; each kept
    /// concept switches to a different surface form with probability
    /// `form_change`.
    pub fn derive<R: Rng + ?Sized>(&self, tokens: &[PlantedToken], rate: f64, rng: &mut R) -> Vec<PlantedToken> {
        let k = crate::generation::mask_count(rate, tokens.len());
        let swapped = rand::seq::index::sample(rng, tokens.len(), k);
        let mut out: Vec<PlantedToken> = tokens
            .iter()
            .map(|&(c, f)| {
                if rng.random_bool(self.config.form_change) {
                    let shift = rng.random_range(1..self.config.forms_per_concept);
                    (c, (f + shift) % self.config.forms_per_concept)
                } else {
                    (c, f)
                }
            })
            .collect();
        for i in swapped.iter() {
            out[i] = (
                rng.random_range(0..self.config.concepts),
                rng.random_range(0..self.config.forms_per_concept),
            );
        }
        out
    }

    pub fn embedding(&self, tokens: &[PlantedToken]) -> Array1<f64> {
        let mut h = Array1::zeros(self.config.dim);
        for &t in tokens {
            h += &self.table.row(self.index(t));
        }
        h / tokens.len() as f64
    }

    /// Hidden cosine, unclamped.
    pub fn similarity(&self, a: &[PlantedToken], b: &[PlantedToken]) -> f64 {
        let (u, v) = (self.embedding(a), self.embedding(b));
        u.dot(&v) / (u.dot(&u).sqrt() * v.dot(&v).sqrt())
    }

    /// A source sentence and its partner, with the partner's rate (`None`
    /// when independent).
    fn pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<PlantedToken>, Vec<PlantedToken>, Option<f64>) {
        let a = self.sentence(rng);
        if rng.random_bool(self.config.independent_fraction) {
            let b = self.sentence(rng);
            (a, b, None)
        } else {
            let rate = self.config.rates[rng.random_range(0..self.config.rates.len())];
            let b = self.derive(&a, rate, rng);
            (a, b, Some(rate))
        }
    }

    /// Training pairs labeled with the clamped hidden cosine plus Gaussian
    /// noise. Independent partners are recorded with mask rate 1.
    pub fn scored_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ScoredPair> {
        (0..n)
            .map(|_| {
                let (a, b, rate) = self.pair(rng);
                let noise = self.config.label_noise * rng.sample::<f64, _>(StandardNormal);
                let y = (self.similarity(&a, &b) + noise).clamp(0.0, 1.0);
                ScoredPair::generated(self.text(&a), self.text(&b), y, rate.unwrap_or(1.0))
            })
            .collect()
    }

    /// Held-out pairs with the noise-free hidden cosine as gold.
    pub fn sts_set<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<StsExample> {
        (0..n)
            .map(|_| {
                let (a, b, _) = self.pair(rng);
                StsExample::new(self.text(&a), self.text(&b), self.similarity(&a, &b))
            })
            .collect()
    }

    /// Anchor, a light rewrite as positive and an unrelated hard negative,
    /// in the shape of premise / entailment / contradiction.
    pub fn triplets<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ScoredTriplet> {
        (0..n)
            .map(|_| {
                let a = self.sentence(rng);
                let rate = [0.0, 0.1, 0.2, 0.3][rng.random_range(0..4)];
                let p = self.derive(&a, rate, rng);
                let neg = self.sentence(rng);
                ScoredTriplet {
                    anchor: self.text(&a),
                    positive: self.text(&p),
                    negative: self.text(&neg),
                    score: self.similarity(&a, &p).clamp(0.0, 1.0),
                }
            })
            .collect()
    }
}
