//! Adam training loop with periodic dev evaluation and best-checkpoint
//! selection.

mod adam;
mod gradcheck;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Provenance, ScoredPair, StsExample};
use crate::encoder::{
    backprop, cross_ids, cross_logit, encode_batch, encode_ids, EncoderError, EncoderParams, Encoded,
    GradientBundle, Upstream, Vocab,
};
use crate::losses::{self, LogitBatch, LossError, PairBatch, TripletBatch};
use crate::par::Exec;
use crate::sts_eval::{evaluate_cross, evaluate_sts, EvalError};

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, grad_check_with, GradCheckConfig};

/// Learning rate used for large pretrained encoders. Far too small for a
/// randomly initialized toy encoder.
pub const PRETRAINED_LEARNING_RATE: f64 = 2e-5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss {value} at step {step}")]
    NonFiniteLoss { step: u64, value: f64 },
    #[error("non-finite gradient {value} at index {index}, step {step}")]
    NonFiniteGradient { step: u64, index: usize, value: f64 },
    #[error("step {step}: {source}")]
    Loss {
        step: u64,
        #[source]
        source: LossError,
    },
    #[error("step {step}: {source}")]
    Encoder {
        step: u64,
        #[source]
        source: EncoderError,
    },
    #[error("dev evaluation at step {step}: {source}")]
    Eval {
        step: u64,
        #[source]
        source: EvalError,
    },
    #[error("{0}")]
    Dataset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Infonce,
    SoftInfonce,
    Bce,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Mse, LossKind::Infonce, LossKind::SoftInfonce, LossKind::Bce];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Infonce => "infonce",
            LossKind::SoftInfonce => "soft-infonce",
            LossKind::Bce => "bce",
        }
    }

    pub fn uses_triplets(self) -> bool {
        matches!(self, LossKind::Infonce | LossKind::SoftInfonce)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown loss `{s}` (expected mse, infonce, soft-infonce or bce)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_interval: u64,
    pub loss_kind: LossKind,
    pub temperature: f64,
    pub rng_seed: u64,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-2,
            eval_interval: 125,
            loss_kind: LossKind::Mse,
            temperature: losses::DEFAULT_TEMPERATURE,
            rng_seed: 42,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.eval_interval == 0 {
            return bad("eval interval must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }
}

/// Anchor, positive and hard negative with the positive's soft label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTriplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSet {
    Pairs(Vec<ScoredPair>),
    Triplets(Vec<ScoredTriplet>),
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        match self {
            TrainingSet::Pairs(p) => p.len(),
            TrainingSet::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape the records for `kind`: triplet losses pair the i-th
    /// `nli-positive` with the i-th `nli-hard-negative`.
    pub fn for_loss(records: Vec<ScoredPair>, kind: LossKind) -> Result<Self, TrainError> {
        if kind.uses_triplets() {
            triplets_from_records(&records).map(TrainingSet::Triplets)
        } else {
            Ok(TrainingSet::Pairs(records))
        }
    }
}

pub fn triplets_from_records(records: &[ScoredPair]) -> Result<Vec<ScoredTriplet>, TrainError> {
    let positives: Vec<&ScoredPair> = records.iter().filter(|r| r.provenance == Provenance::NliPositive).collect();
    let negatives: Vec<&ScoredPair> = records
        .iter()
        .filter(|r| r.provenance == Provenance::NliHardNegative)
        .collect();
    if positives.len() != negatives.len() {
        return Err(TrainError::Dataset(format!(
            "{} nli-positive records but {} nli-hard-negative records",
            positives.len(),
            negatives.len()
        )));
    }
    positives
        .iter()
        .zip(&negatives)
        .enumerate()
        .map(|(i, (p, n))| {
            if p.a != n.a {
                return Err(TrainError::Dataset(format!(
                    "triplet {i}: positive premise `{}` differs from negative premise `{}`",
                    p.a, n.a
                )));
            }
            Ok(ScoredTriplet {
                anchor: p.a.clone(),
                positive: p.b.clone(),
                negative: n.b.clone(),
                score: p.score,
            })
        })
        .collect()
}

/// A borrowed batch of either shape.
#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    Pairs(&'a [&'a ScoredPair]),
    Triplets(&'a [&'a ScoredTriplet]),
}

/// Mean loss over the batch and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    kind: LossKind,
    batch: Batch<'_>,
    params: &EncoderParams,
    vocab: &Vocab,
    temperature: f64,
    exec: Exec,
) -> Result<(f64, GradientBundle), TrainError> {
    let enc = |e| TrainError::Encoder { step: 0, source: e };
    let loss = |e| TrainError::Loss { step: 0, source: e };
    match (kind, batch) {
        (LossKind::Mse, Batch::Pairs(pairs)) => {
            let texts: Vec<&str> = pairs.iter().map(|p| p.a.as_str()).chain(pairs.iter().map(|p| p.b.as_str())).collect();
            let fwd = encode_batch(&texts, params, vocab, exec).map_err(enc)?;
            let n = pairs.len();
            let out = losses::mse_loss(&PairBatch {
                left: fwd[..n].iter().map(|e| e.embedding.clone()).collect(),
                right: fwd[n..].iter().map(|e| e.embedding.clone()).collect(),
                targets: pairs.iter().map(|p| p.score).collect(),
            })
            .map_err(loss)?;
            let upstream: Vec<Upstream> = out.left.into_iter().chain(out.right).map(Upstream::Embedding).collect();
            Ok((out.loss, backprop(&fwd, &upstream, params).map_err(enc)?))
        }
        (LossKind::Bce, Batch::Pairs(pairs)) => {
            let fwd: Vec<Encoded> = exec.try_map(pairs, |p| {
                cross_ids(&p.a, &p.b, vocab).and_then(|ids| encode_ids(&ids, params))
            })
            .map_err(enc)?;
            let out = losses::bce_loss(&LogitBatch {
                logits: fwd.iter().map(|e| cross_logit(e, params)).collect(),
                targets: pairs.iter().map(|p| p.score).collect(),
            })
            .map_err(loss)?;
            let upstream: Vec<Upstream> = out.logits.into_iter().map(Upstream::Logit).collect();
            Ok((out.loss, backprop(&fwd, &upstream, params).map_err(enc)?))
        }
        (LossKind::Infonce | LossKind::SoftInfonce, Batch::Triplets(trips)) => {
            let texts: Vec<&str> = trips
                .iter()
                .map(|t| t.anchor.as_str())
                .chain(trips.iter().map(|t| t.positive.as_str()))
                .chain(trips.iter().map(|t| t.negative.as_str()))
                .collect();
            let fwd = encode_batch(&texts, params, vocab, exec).map_err(enc)?;
            let n = trips.len();
            let emb = |r: std::ops::Range<usize>| fwd[r].iter().map(|e| e.embedding.clone()).collect();
            let tb = TripletBatch {
                anchors: emb(0..n),
                positives: emb(n..2 * n),
                negatives: emb(2 * n..3 * n),
                targets: trips.iter().map(|t| t.score).collect(),
                temperature,
            };
            let out = if kind == LossKind::SoftInfonce {
                losses::soft_infonce(&tb)
            } else {
                losses::infonce(&tb)
            }
            .map_err(loss)?;
            let upstream: Vec<Upstream> = out
                .anchors
                .into_iter()
                .chain(out.positives)
                .chain(out.negatives)
                .map(Upstream::Embedding)
                .collect();
            Ok((out.loss, backprop(&fwd, &upstream, params).map_err(enc)?))
        }
        (kind, _) => Err(TrainError::Config(format!("loss {kind} does not match the dataset shape"))),
    }
}

/// Snapshot of the parameters at an evaluated step.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub dev_spearman: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub step: u64,
    pub epoch: usize,
    /// Mean training loss since the previous evaluation; `None` before any step.
    pub train_loss: Option<f64>,
    pub dev_spearman: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub evaluations: Vec<Evaluation>,
    pub step_losses: Vec<f64>,
    pub final_params: EncoderParams,
}

impl TrainOutcome {
    /// Plain-text log: one line per evaluation and a closing summary line.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for e in &self.evaluations {
            let loss = e.train_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.6}"));
            out.push_str(&format!(
                "step={} epoch={} loss={} dev_spearman={:.6}\n",
                e.step, e.epoch, loss, e.dev_spearman
            ));
        }
        out.push_str(&format!(
            "best step={} dev_spearman={:.6}\n",
            self.best.step, self.best.dev_spearman
        ));
        out
    }
}

fn dev_metric(
    kind: LossKind,
    params: &EncoderParams,
    vocab: &Vocab,
    dev: &[StsExample],
    exec: Exec,
    step: u64,
) -> Result<f64, TrainError> {
    let rho = if kind == LossKind::Bce {
        evaluate_cross(params, vocab, dev, exec)
    } else {
        evaluate_sts(params, vocab, dev, exec)
    };
    match rho {
        Ok(r) => Ok(r),
        // A constant predictor (e.g. a zero head) carries no ranking.
        Err(EvalError::Constant(_)) => {
            log::warn!("dev predictions constant at step {step}; scoring as 0");
            Ok(0.0)
        }
        Err(source) => Err(TrainError::Eval { step, source }),
    }
}

pub fn train(
    config: &TrainConfig,
    dataset: &TrainingSet,
    dev_set: &[StsExample],
    params: EncoderParams,
    vocab: &Vocab,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::Empty("dev set"));
    }
    params.check_shape().map_err(|e| TrainError::Shape(e.to_string()))?;
    if params.vocab_size() != vocab.len() {
        return Err(TrainError::Shape(format!(
            "vocabulary of {} tokens but {} embedding rows",
            vocab.len(),
            params.vocab_size()
        )));
    }
    let pairs: Vec<&ScoredPair>;
    let trips: Vec<&ScoredTriplet>;
    match dataset {
        TrainingSet::Pairs(p) => {
            pairs = p.iter().collect();
            trips = Vec::new();
        }
        TrainingSet::Triplets(t) => {
            pairs = Vec::new();
            trips = t.iter().collect();
        }
    }
    if config.loss_kind.uses_triplets() != matches!(dataset, TrainingSet::Triplets(_)) {
        return Err(TrainError::Config(format!(
            "loss {} does not match the dataset shape",
            config.loss_kind
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut params = params;
    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step: u64 = 0;
    let mut evaluations = Vec::new();
    let mut step_losses = Vec::new();
    let mut since_eval: Vec<f64> = Vec::new();
    let mut best: Option<Checkpoint> = None;

    let mut evaluate = |params: &EncoderParams, step: u64, epoch: usize, since: &mut Vec<f64>| -> Result<(), TrainError> {
        let rho = dev_metric(config.loss_kind, params, vocab, dev_set, config.exec, step)?;
        let train_loss = (!since.is_empty()).then(|| since.iter().sum::<f64>() / since.len() as f64);
        since.clear();
        log::info!("step {step} epoch {epoch} dev spearman {rho:.4}");
        evaluations.push(Evaluation {
            step,
            epoch,
            train_loss,
            dev_spearman: rho,
        });
        if best.as_ref().is_none_or(|b| rho > b.dev_spearman) {
            best = Some(Checkpoint {
                params: params.clone(),
                dev_spearman: rho,
                step,
            });
        }
        Ok(())
    };

    let mut last_eval: Option<u64> = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let (loss, grads) = match dataset {
                TrainingSet::Pairs(_) => {
                    let b: Vec<&ScoredPair> = chunk.iter().map(|&i| pairs[i]).collect();
                    loss_and_gradients(config.loss_kind, Batch::Pairs(&b), &params, vocab, config.temperature, config.exec)
                }
                TrainingSet::Triplets(_) => {
                    let b: Vec<&ScoredTriplet> = chunk.iter().map(|&i| trips[i]).collect();
                    loss_and_gradients(config.loss_kind, Batch::Triplets(&b), &params, vocab, config.temperature, config.exec)
                }
            }
            .map_err(|e| with_step(e, step))?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { step, value: loss });
            }
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
            step_losses.push(loss);
            since_eval.push(loss);
            if step.is_multiple_of(config.eval_interval) {
                evaluate(&params, step, epoch, &mut since_eval)?;
                last_eval = Some(step);
            }
        }
    }
    if last_eval != Some(step) {
        evaluate(&params, step, config.epochs.saturating_sub(1), &mut since_eval)?;
    }
    Ok(TrainOutcome {
        best: best.expect("at least one evaluation ran"),
        evaluations,
        step_losses,
        final_params: params,
    })
}

fn with_step(e: TrainError, step: u64) -> TrainError {
    match e {
        TrainError::Loss { source, .. } => TrainError::Loss { step, source },
        TrainError::Encoder { source, .. } => TrainError::Encoder { step, source },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::build_vocab_from_texts;

    fn pair(a: &str, b: &str, y: f64) -> ScoredPair {
        ScoredPair::nli(a, b, y, Provenance::NliPositive)
    }

    fn small() -> (Vec<ScoredPair>, Vec<StsExample>, Vocab) {
        let data = vec![
            pair("the cat sat", "a cat sat", 0.9),
            pair("the dog ran", "a dog ran", 0.8),
            pair("the cat sat", "the dog ran", 0.1),
            pair("red sky today", "the cat sat", 0.0),
        ];
        let dev = vec![
            StsExample::new("the cat sat", "a cat sat", 5.0),
            StsExample::new("the dog ran", "red sky today", 0.5),
            StsExample::new("a dog ran", "the dog ran", 4.0),
        ];
        let texts = data.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]);
        let vocab = build_vocab_from_texts(texts, 1).unwrap();
        (data, dev, vocab)
    }

    fn init(vocab: &Vocab, seed: u64) -> EncoderParams {
        EncoderParams::init(vocab.len(), 6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.as_str().parse::<LossKind>().unwrap(), k);
        }
        assert!("hinge".parse::<LossKind>().is_err());
    }

    #[test]
    fn dataset_smaller_than_one_batch() {
        let (data, dev, vocab) = small();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &TrainingSet::Pairs(data), &dev, init(&vocab, 1), &vocab).unwrap();
        assert_eq!(out.step_losses.len(), 2);
        assert_eq!(out.evaluations.len(), 1);
        assert_eq!(out.evaluations[0].step, 2);
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (data, dev, vocab) = small();
        let p0 = init(&vocab, 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &TrainingSet::Pairs(data), &dev, p0.clone(), &vocab).unwrap();
        assert_eq!(out.best.params, p0);
        assert_eq!(out.best.step, 0);
        assert_eq!(out.best.dev_spearman, evaluate_sts(&p0, &vocab, &dev, Exec::Sequential).unwrap());
        assert!(out.log().starts_with("step=0 epoch=0 loss=- dev_spearman="));
    }

    #[test]
    fn best_is_max_over_evaluations_and_runs_are_deterministic() {
        let (data, dev, vocab) = small();
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 3,
            eval_interval: 3,
            ..TrainConfig::default()
        };
        let run = || train(&cfg, &TrainingSet::Pairs(data.clone()), &dev, init(&vocab, 3), &vocab).unwrap();
        let a = run();
        let max = a.evaluations.iter().map(|e| e.dev_spearman).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best.dev_spearman, max);
        assert_eq!(a.step_losses.len(), 20);
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.log(), b.log());
    }

    #[test]
    fn parallel_matches_sequential() {
        let (data, dev, vocab) = small();
        let mk = |exec| TrainConfig {
            epochs: 3,
            batch_size: 2,
            exec,
            ..TrainConfig::default()
        };
        let run = |exec| train(&mk(exec), &TrainingSet::Pairs(data.clone()), &dev, init(&vocab, 4), &vocab).unwrap();
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }

    #[test]
    fn overfit_probe_is_monotone() {
        let (data, dev, vocab) = small();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 1e-5,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &TrainingSet::Pairs(data), &dev, init(&vocab, 5), &vocab).unwrap();
        for w in out.step_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
        }
        assert!(out.step_losses[49] < out.step_losses[0]);
    }

    #[test]
    fn triplets_align_by_index() {
        let recs = vec![
            ScoredPair::nli("p1", "e1", 0.8, Provenance::NliPositive),
            ScoredPair::nli("p1", "c1", 0.0, Provenance::NliHardNegative),
            ScoredPair::nli("p2", "e2", 0.6, Provenance::NliPositive),
            ScoredPair::nli("p2", "c2", 0.0, Provenance::NliHardNegative),
        ];
        let t = triplets_from_records(&recs).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[1].anchor.as_str(), t[1].positive.as_str(), t[1].negative.as_str()), ("p2", "e2", "c2"));
        assert_eq!(t[1].score, 0.6);
        assert!(triplets_from_records(&recs[..3]).is_err());
        let swapped = vec![recs[0].clone(), recs[3].clone()];
        assert!(triplets_from_records(&swapped).is_err());
    }

    #[test]
    fn shape_and_input_errors() {
        let (data, dev, vocab) = small();
        let p = init(&vocab, 6);
        let set = TrainingSet::Pairs(data.clone());
        let soft = TrainConfig {
            loss_kind: LossKind::SoftInfonce,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&soft, &set, &dev, p.clone(), &vocab), Err(TrainError::Config(_))));
        assert!(matches!(
            train(&TrainConfig::default(), &TrainingSet::Pairs(vec![]), &dev, p.clone(), &vocab),
            Err(TrainError::Empty(_))
        ));
        assert!(matches!(train(&TrainConfig::default(), &set, &[], p.clone(), &vocab), Err(TrainError::Empty(_))));
        let zero_batch = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&zero_batch, &set, &dev, p, &vocab), Err(TrainError::Config(_))));
    }

    #[test]
    fn exploding_learning_rate_reports_step() {
        let (data, dev, vocab) = small();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            batch_size: 1,
            ..TrainConfig::default()
        };
        match train(&cfg, &TrainingSet::Pairs(data), &dev, init(&vocab, 7), &vocab) {
            Err(TrainError::NonFiniteLoss { step, .. })
            | Err(TrainError::NonFiniteGradient { step, .. })
            | Err(TrainError::Loss { step, .. })
            | Err(TrainError::Encoder { step, .. }) => assert!(step >= 2),
            other => panic!("expected a step-tagged failure, got {other:?}"),
        }
    }
}
