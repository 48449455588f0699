//! Sentences, scored pairs, NLI triplets and STS examples, plus their on-disk
//! formats.
//!
//! Scored pairs are stored one JSON object per line with the fields `a`, `b`,
//! `score`, `provenance` and (for generated pairs) `mask_rate`. Scores are
//! written with the shortest representation that parses back to the same
//! `f64`, so files round-trip exactly and stay byte-stable.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("histogram needs at least one bin")]
    ZeroBins,
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: usize,
    pub text: String,
}

impl Sentence {
    pub fn new(id: usize, text: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
        }
    }
}

/// Where a scored pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Original sentence paired with its LLM reconstruction, LLM-scored.
    Generated,
    /// Original sentence paired with another random corpus sentence, score 0.
    RandomNegative,
    /// NLI premise paired with its entailment hypothesis.
    NliPositive,
    /// NLI premise paired with its contradiction hypothesis.
    NliHardNegative,
}

impl Provenance {
    pub const ALL: [Provenance; 4] = [
        Provenance::Generated,
        Provenance::RandomNegative,
        Provenance::NliPositive,
        Provenance::NliHardNegative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Generated => "generated",
            Provenance::RandomNegative => "random-negative",
            Provenance::NliPositive => "nli-positive",
            Provenance::NliHardNegative => "nli-hard-negative",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two sentences and their similarity score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredPair {
    pub a: String,
    pub b: String,
    pub score: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rate: Option<f64>,
}

impl ScoredPair {
    pub fn generated(a: impl Into<String>, b: impl Into<String>, score: f64, mask_rate: f64) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            score,
            provenance: Provenance::Generated,
            mask_rate: Some(mask_rate),
        }
    }

    pub fn random_negative(a: impl Into<String>, b: impl Into<String>) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            score: 0.0,
            provenance: Provenance::RandomNegative,
            mask_rate: None,
        }
    }

    pub fn nli(a: impl Into<String>, b: impl Into<String>, score: f64, provenance: Provenance) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            score,
            provenance,
            mask_rate: None,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if let Some(rate) = self.mask_rate {
            if !rate.is_finite() || !(0.0..=1.0).contains(&rate) {
                return Err(format!("mask_rate {rate} outside [0, 1]"));
            }
        }
        match self.provenance {
            Provenance::RandomNegative if self.score != 0.0 => {
                Err(format!("random-negative pair has score {}", self.score))
            }
            Provenance::Generated if self.mask_rate.is_none() => {
                Err("generated pair without mask_rate".to_string())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NliTriplet {
    pub premise: String,
    pub entailment: String,
    pub contradiction: String,
}

impl NliTriplet {
    pub fn new(
        premise: impl Into<String>,
        entailment: impl Into<String>,
        contradiction: impl Into<String>,
    ) -> Self {
        Self {
            premise: premise.into(),
            entailment: entailment.into(),
            contradiction: contradiction.into(),
        }
    }
}

/// One STS evaluation pair; `gold` stays on the source's native scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StsExample {
    pub a: String,
    pub b: String,
    pub gold: f64,
}

impl StsExample {
    pub fn new(a: impl Into<String>, b: impl Into<String>, gold: f64) -> Self {
        Self {
            a: a.into(),
            b: b.into(),
            gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceFormat {
    /// One sentence per nonempty line.
    PlainLines,
    /// Tab-separated rows; the zero-based column holds the sentence.
    TsvColumn(usize),
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CorpusError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CorpusError::io(path, e))
}

/// Iterate `(1-based line number, line)` over nonblank lines.
fn nonblank_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if !line.trim().is_empty() {
            out.push((idx + 1, line.to_string()));
        }
    }
    Ok(out)
}

pub fn load_sentences(path: &Path, format: SentenceFormat) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    for (line_no, line) in nonblank_lines(path)? {
        let text = match format {
            SentenceFormat::PlainLines => line.trim().to_string(),
            SentenceFormat::TsvColumn(col) => {
                let cell = line.split('\t').nth(col).ok_or_else(|| {
                    CorpusError::malformed(path, line_no, format!("missing column {col}"))
                })?;
                cell.trim().to_string()
            }
        };
        if text.is_empty() {
            continue;
        }
        sentences.push(Sentence::new(sentences.len(), text));
    }
    Ok(sentences)
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut w = create(path)?;
    for s in sentences {
        writeln!(w, "{}", s.text).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn write_scored_pairs(path: &Path, pairs: &[ScoredPair]) -> Result<()> {
    let mut w = create(path)?;
    for (i, pair) in pairs.iter().enumerate() {
        pair.validate()
            .map_err(|m| CorpusError::Invalid(format!("pair {i}: {m}")))?;
        let line = serde_json::to_string(pair).expect("scored pair serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_scored_pairs(path: &Path) -> Result<Vec<ScoredPair>> {
    let mut pairs = Vec::new();
    for (line_no, line) in nonblank_lines(path)? {
        let pair: ScoredPair = serde_json::from_str(&line)
            .map_err(|e| CorpusError::malformed(path, line_no, e.to_string()))?;
        pair.validate()
            .map_err(|m| CorpusError::malformed(path, line_no, m))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Unlabeled output of the generation step: original, reconstruction, mask rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedPair {
    pub a: String,
    pub b: String,
    pub mask_rate: f64,
}

pub fn write_generated_pairs(path: &Path, pairs: &[GeneratedPair]) -> Result<()> {
    let mut w = create(path)?;
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("generated pair serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn read_generated_pairs(path: &Path) -> Result<Vec<GeneratedPair>> {
    nonblank_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let pair: GeneratedPair = serde_json::from_str(&line)
                .map_err(|e| CorpusError::malformed(path, line_no, e.to_string()))?;
            if !(0.0..=1.0).contains(&pair.mask_rate) {
                return Err(CorpusError::malformed(
                    path,
                    line_no,
                    format!("mask_rate {} outside [0, 1]", pair.mask_rate),
                ));
            }
            Ok(pair)
        })
        .collect()
}

fn split_tsv<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let cells: Vec<&str> = line.split('\t').collect();
    if cells.len() != n {
        return Err(CorpusError::malformed(
            path,
            line_no,
            format!("expected {n} tab-separated columns, found {}", cells.len()),
        ));
    }
    Ok(cells)
}

/// Read `premise \t entailment \t contradiction` rows.
pub fn read_nli_triplets(path: &Path) -> Result<Vec<NliTriplet>> {
    nonblank_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let cells = split_tsv(path, line_no, &line, 3)?;
            if cells.iter().any(|c| c.trim().is_empty()) {
                return Err(CorpusError::malformed(path, line_no, "empty triplet field"));
            }
            Ok(NliTriplet::new(cells[0].trim(), cells[1].trim(), cells[2].trim()))
        })
        .collect()
}

pub fn write_nli_triplets(path: &Path, triplets: &[NliTriplet]) -> Result<()> {
    let mut w = create(path)?;
    for t in triplets {
        writeln!(w, "{}\t{}\t{}", t.premise, t.entailment, t.contradiction)
            .map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Read `gold \t a \t b` rows.
pub fn read_sts(path: &Path) -> Result<Vec<StsExample>> {
    nonblank_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let cells = split_tsv(path, line_no, &line, 3)?;
            let gold: f64 = cells[0].trim().parse().map_err(|_| {
                CorpusError::malformed(path, line_no, format!("bad gold score {:?}", cells[0]))
            })?;
            if !gold.is_finite() {
                return Err(CorpusError::malformed(path, line_no, "gold score not finite"));
            }
            Ok(StsExample::new(cells[1].trim(), cells[2].trim(), gold))
        })
        .collect()
}

pub fn write_sts(path: &Path, examples: &[StsExample]) -> Result<()> {
    let mut w = create(path)?;
    for ex in examples {
        writeln!(w, "{}\t{}\t{}", ex.gold, ex.a, ex.b).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ScoreHistogram {
    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Percentage of the total in each bin; all zero for an empty histogram.
    pub fn percentages(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| 100.0 * c as f64 / self.total as f64)
            .collect()
    }
}

/// Equal-width histogram over `[0, 1]`; bins are half-open except the last.
pub fn score_histogram(pairs: &[ScoredPair], bins: usize) -> Result<ScoreHistogram> {
    histogram_of(pairs.iter().map(|p| p.score), bins)
}

pub fn histogram_of(scores: impl IntoIterator<Item = f64>, bins: usize) -> Result<ScoreHistogram> {
    if bins == 0 {
        return Err(CorpusError::ZeroBins);
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    let mut total = 0;
    for score in scores {
        if !(0.0..=1.0).contains(&score) {
            return Err(CorpusError::Invalid(format!("score {score} outside [0, 1]")));
        }
        // The float estimate can land one bin off near an edge; settle it against the edges.
        let mut k = ((score * bins as f64) as usize).min(bins - 1);
        while k > 0 && score < bin_edges[k] {
            k -= 1;
        }
        while k + 1 < bins && score >= bin_edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
        total += 1;
    }
    Ok(ScoreHistogram {
        bin_edges,
        counts,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn with_scores(scores: &[f64]) -> Vec<ScoredPair> {
        scores
            .iter()
            .map(|&s| ScoredPair::generated("x", "y", s, 0.1))
            .collect()
    }

    #[test]
    fn empty_file_loads_nothing() {
        let f = temp_file("");
        assert!(load_sentences(f.path(), SentenceFormat::PlainLines).unwrap().is_empty());
    }

    #[test]
    fn plain_lines_get_sequential_ids() {
        let f = temp_file("a plane is taking off .\na man is playing a large flute .\n");
        let s = load_sentences(f.path(), SentenceFormat::PlainLines).unwrap();
        assert_eq!(
            s,
            vec![
                Sentence::new(0, "a plane is taking off ."),
                Sentence::new(1, "a man is playing a large flute ."),
            ]
        );
    }

    #[test]
    fn blank_lines_are_skipped() {
        let f = temp_file("one\n\ntwo\n");
        let s = load_sentences(f.path(), SentenceFormat::PlainLines).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1], Sentence::new(1, "two"));
    }

    #[test]
    fn tsv_column_reports_line_of_short_row() {
        let f = temp_file("x\tfirst\n\ny\n");
        let s = load_sentences(f.path(), SentenceFormat::TsvColumn(1));
        match s {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn unreadable_file_is_an_error() {
        let r = load_sentences(Path::new("/nonexistent/sentences.txt"), SentenceFormat::PlainLines);
        assert!(matches!(r, Err(CorpusError::Io { .. })));
    }

    #[test]
    fn single_pair_is_one_line_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![ScoredPair::generated("x", "y", 0.5, 0.3)];
        write_scored_pairs(&path, &pairs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(
            text,
            "{\"a\":\"x\",\"b\":\"y\",\"score\":0.5,\"provenance\":\"generated\",\"mask_rate\":0.3}\n"
        );
        assert_eq!(read_scored_pairs(&path).unwrap(), pairs);
    }

    #[test]
    fn empty_pair_list_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        write_scored_pairs(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(read_scored_pairs(&path).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_score_names_the_line() {
        let f = temp_file(
            "{\"a\":\"x\",\"b\":\"y\",\"score\":0.5,\"provenance\":\"nli-positive\"}\n\
             {\"a\":\"x\",\"b\":\"y\",\"score\":1.2,\"provenance\":\"nli-positive\"}\n",
        );
        let err = read_scored_pairs(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn missing_score_is_an_error() {
        let f = temp_file("{\"a\":\"x\",\"b\":\"y\",\"provenance\":\"nli-positive\"}\n");
        assert!(matches!(
            read_scored_pairs(f.path()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn invariants_checked_on_read() {
        let f = temp_file("{\"a\":\"x\",\"b\":\"y\",\"score\":0.3,\"provenance\":\"random-negative\"}\n");
        assert!(read_scored_pairs(f.path()).is_err());
        let f = temp_file("{\"a\":\"x\",\"b\":\"y\",\"score\":0.3,\"provenance\":\"generated\"}\n");
        assert!(read_scored_pairs(f.path()).is_err());
    }

    #[test]
    fn nli_and_sts_files() {
        let f = temp_file("p\te\tc\n\nq\tf\td\n");
        let t = read_nli_triplets(f.path()).unwrap();
        assert_eq!(t, vec![NliTriplet::new("p", "e", "c"), NliTriplet::new("q", "f", "d")]);
        let f = temp_file("p\te\n");
        assert!(matches!(read_nli_triplets(f.path()), Err(CorpusError::Malformed { line: 1, .. })));

        let f = temp_file("4.2\ta dog\ta cat\n0\tx\ty\n");
        let s = read_sts(f.path()).unwrap();
        assert_eq!(s[0], StsExample::new("a dog", "a cat", 4.2));
        let f = temp_file("high\tx\ty\n");
        assert!(read_sts(f.path()).is_err());
    }

    #[test]
    fn histogram_boundaries() {
        let h = score_histogram(&with_scores(&[0.0, 1.0]), 2).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.bin_edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(h.total, 2);
    }

    #[test]
    fn histogram_of_first_example_block() {
        // Scores of the "a plane is taking off ." block of generated examples.
        let scores = [0.80, 0.80, 0.90, 0.75, 0.67, 0.00, 0.67, 0.00, 0.00];
        let h = score_histogram(&with_scores(&scores), 10).unwrap();
        assert_eq!(h.counts, vec![3, 0, 0, 0, 0, 0, 2, 1, 2, 1]);
    }

    #[test]
    fn histogram_of_uniform_grid() {
        let scores: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let h = score_histogram(&with_scores(&scores), 10).unwrap();
        assert_eq!(h.counts, vec![10, 10, 10, 10, 10, 10, 10, 10, 10, 11]);
    }

    #[test]
    fn zero_bins_rejected() {
        assert!(matches!(score_histogram(&[], 0), Err(CorpusError::ZeroBins)));
    }

    #[test]
    fn empty_histogram_percentages() {
        let h = score_histogram(&[], 10).unwrap();
        assert_eq!(h.percentages(), vec![0.0; 10]);
    }

    fn arb_pair() -> impl Strategy<Value = ScoredPair> {
        let text = "[ -~\\t\"\\\\é<>]{1,30}";
        (text, text, 0.0f64..=1.0, 0usize..4, 0.0f64..=1.0).prop_map(|(a, b, s, p, r)| {
            match Provenance::ALL[p] {
                Provenance::Generated => ScoredPair::generated(a, b, s, r),
                Provenance::RandomNegative => ScoredPair::random_negative(a, b),
                prov => ScoredPair::nli(a, b, s, prov),
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn scored_pairs_round_trip(pairs in proptest::collection::vec(arb_pair(), 1000)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("pairs.jsonl");
            write_scored_pairs(&path, &pairs).unwrap();
            let back = read_scored_pairs(&path).unwrap();
            prop_assert_eq!(back.len(), pairs.len());
            for (x, y) in back.iter().zip(&pairs) {
                prop_assert_eq!(x.score.to_bits(), y.score.to_bits());
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn histogram_conserves_count(scores in proptest::collection::vec(0.0f64..=1.0, 0..200), bins in 1usize..40) {
            let h = histogram_of(scores.iter().copied(), bins).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), scores.len());
            prop_assert_eq!(h.total, scores.len());
        }
    }
}
