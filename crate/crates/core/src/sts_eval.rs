//! Spearman-of-cosine evaluation on STS files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{read_sts, CorpusError, StsExample};
use crate::encoder::{cosine_similarity, cross_encode, encode, EncoderError, EncoderParams, Vocab};
use crate::par::Exec;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("{0} input is constant; rank correlation undefined")]
    Constant(&'static str),
    #[error("example {index}: {source}")]
    Example {
        index: usize,
        #[source]
        source: EncoderError,
    },
    #[error("dataset {name}: {source}")]
    Dataset {
        name: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no datasets to evaluate")]
    NoDatasets,
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's ρ: Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort(x.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) {
        return Err(EvalError::Constant("first"));
    }
    if constant(y) {
        return Err(EvalError::Constant("second"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::Constant("non-finite"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Bi-encoder cosine for every example.
pub fn predict_cosines(
    params: &EncoderParams,
    vocab: &Vocab,
    dataset: &[StsExample],
    exec: Exec,
) -> Result<Vec<f64>, EvalError> {
    let indexed: Vec<(usize, &StsExample)> = dataset.iter().enumerate().collect();
    exec.try_map(&indexed, |&(index, ex)| {
        let a = encode(&ex.a, params, vocab).map_err(|source| EvalError::Example { index, source })?;
        let b = encode(&ex.b, params, vocab).map_err(|source| EvalError::Example { index, source })?;
        cosine_similarity(&a, &b).map_err(|source| EvalError::Example { index, source })
    })
}

/// Spearman between predicted cosines and gold scores.
pub fn evaluate_sts(
    params: &EncoderParams,
    vocab: &Vocab,
    dataset: &[StsExample],
    exec: Exec,
) -> Result<f64, EvalError> {
    if dataset.len() < 2 {
        return Err(EvalError::TooShort(dataset.len()));
    }
    let predictions = predict_cosines(params, vocab, dataset, exec)?;
    let gold: Vec<f64> = dataset.iter().map(|e| e.gold).collect();
    spearman(&predictions, &gold)
}

/// Spearman between cross-encoder logits and gold scores.
pub fn evaluate_cross(
    params: &EncoderParams,
    vocab: &Vocab,
    dataset: &[StsExample],
    exec: Exec,
) -> Result<f64, EvalError> {
    if dataset.len() < 2 {
        return Err(EvalError::TooShort(dataset.len()));
    }
    let indexed: Vec<(usize, &StsExample)> = dataset.iter().enumerate().collect();
    let predictions = exec.try_map(&indexed, |&(index, ex)| {
        cross_encode(&ex.a, &ex.b, params, vocab).map_err(|source| EvalError::Example { index, source })
    })?;
    let gold: Vec<f64> = dataset.iter().map(|e| e.gold).collect();
    spearman(&predictions, &gold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetScore {
    pub name: String,
    pub spearman: f64,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub datasets: Vec<DatasetScore>,
    /// Unweighted mean over datasets.
    pub average: f64,
}

impl EvalReport {
    pub fn from_scores(datasets: Vec<DatasetScore>) -> Result<Self, EvalError> {
        if datasets.is_empty() {
            return Err(EvalError::NoDatasets);
        }
        let average = datasets.iter().map(|d| d.spearman).sum::<f64>() / datasets.len() as f64;
        Ok(Self { datasets, average })
    }

    /// Aligned plain-text table, Spearman scaled by 100.
    pub fn render(&self) -> String {
        let width = self
            .datasets
            .iter()
            .map(|d| d.name.len())
            .chain(["dataset".len(), "avg".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", "dataset", "n", "spearman");
        for d in &self.datasets {
            let _ = writeln!(out, "{:<width$}  {:>8}  {:>8.2}", d.name, d.examples, d.spearman * 100.0);
        }
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8.2}", "avg", "", self.average * 100.0);
        out
    }
}

/// Evaluate every named STS file; the first failure aborts with its name.
pub fn evaluate_suite(
    params: &EncoderParams,
    vocab: &Vocab,
    datasets: &[(String, PathBuf)],
    exec: Exec,
) -> Result<EvalReport, EvalError> {
    if datasets.is_empty() {
        return Err(EvalError::NoDatasets);
    }
    let mut scores = Vec::with_capacity(datasets.len());
    for (name, path) in datasets {
        let wrap = |e: EvalError| EvalError::Dataset {
            name: name.clone(),
            source: Box::new(e),
        };
        let examples = read_sts(Path::new(path)).map_err(|e| wrap(e.into()))?;
        let rho = evaluate_sts(params, vocab, &examples, exec).map_err(wrap)?;
        scores.push(DatasetScore {
            name: name.clone(),
            spearman: rho,
            examples: examples.len(),
        });
    }
    EvalReport::from_scores(scores)
}
