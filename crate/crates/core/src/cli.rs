//! The `sentsim` command line.
//!
//! Values come from flags first, then from an optional TOML file given with
//! `--config`, then from built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::corpus::{
    load_sentences, read_generated_pairs, read_nli_triplets, read_scored_pairs, read_sts, score_histogram,
    write_generated_pairs, write_scored_pairs, Provenance, ScoredPair, SentenceFormat,
};
use crate::encoder::{build_vocab_from_texts, load_checkpoint, save_checkpoint, EncoderParams};
use crate::gateway::{Completer, GatewayConfig, HttpCompleter, ReplayCompleter, ReplayStore};
use crate::generation::{
    build_nli_pairs, generate_pairs, label_nli_positives, label_nli_triplets, label_scores, sample_zero_negatives,
    PipelineConfig,
};
use crate::par::Exec;
use crate::sts_eval::evaluate_suite;
use crate::trainer::{train, LossKind, TrainConfig, TrainOutcome, TrainingSet};

#[derive(Debug, Parser)]
#[command(name = "sentsim", version, about = "LLM-scored sentence pairs, small encoders, STS evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Recorded completions (JSON Lines of prompt_hash / response_text).
    #[arg(long, global = true)]
    pub replay: Option<PathBuf>,
    /// Fail on prompts missing from the replay file.
    #[arg(long, global = true)]
    pub strict_replay: bool,
    /// On replay misses call the live endpoint and append to the replay file.
    #[arg(long, global = true)]
    pub record: bool,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Environment variable holding the API token.
    #[arg(long, global = true, value_name = "VAR")]
    pub auth_env: Option<String>,
    /// Maximum completion requests in flight.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run without the thread pool.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mask sentences and have the model rewrite them.
    Generate(GenerateArgs),
    /// Score generated pairs.
    Label(LabelArgs),
    /// Assemble a training dataset.
    Build(BuildArgs),
    /// Train an encoder and keep the best dev checkpoint.
    Train(TrainArgs),
    /// Spearman evaluation on STS files.
    Eval(EvalArgs),
    /// Score histogram of a scored-pair file.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub sentences: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Read sentences from this 0-based column of a TSV file.
    #[arg(long)]
    pub tsv_column: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub mask_rates: Option<Vec<f64>>,
    #[arg(long)]
    pub merge_probability: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuildMode {
    Claif,
    ClaifScaled,
    Clhaif,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub mode: BuildMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Scored generated pairs (claif, claif-scaled).
    #[arg(long)]
    pub scored: Option<PathBuf>,
    /// Sentence file the negatives are drawn from (claif, claif-scaled).
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub tsv_column: Option<usize>,
    /// premise / entailment / contradiction TSV (claif-scaled, clhaif).
    #[arg(long)]
    pub nli: Option<PathBuf>,
    /// Random zero-score partners per sentence.
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// STS file (gold, a, b) used for checkpoint selection.
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log; defaults to `<out>.log`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// One or more learning rates; several run a grid search.
    #[arg(long, value_delimiter = ',')]
    pub lr: Option<Vec<f64>>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Drop tokens seen fewer times than this.
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `name=path` of an STS file; repeatable.
    #[arg(long = "dataset", value_name = "NAME=PATH", required = true)]
    pub datasets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub scored: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub auth_env: Option<String>,
    pub concurrency: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<f64>,
    pub min_interval_ms: Option<u64>,
    pub initial_backoff_ms: Option<u64>,
    pub max_backoff_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub mask_rates: Option<Vec<f64>>,
    pub merge_probability: Option<f64>,
    pub negatives_per_sentence: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub loss: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rates: Option<Vec<f64>>,
    pub eval_interval: Option<u64>,
    pub temperature: Option<f64>,
    pub dim: Option<usize>,
    pub min_freq: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Everything a subcommand needs after merging flags, file and defaults.
struct Resolved {
    seed: u64,
    gateway: GatewayConfig,
    pipeline: PipelineConfig,
    exec: Exec,
    common: CommonArgs,
}

fn resolve(common: &CommonArgs) -> Result<(Resolved, FileConfig)> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = common.seed.or(file.seed).unwrap_or(42);

    let g = &file.gateway;
    let mut gateway = GatewayConfig::default();
    if let Some(v) = common.endpoint.clone().or_else(|| g.endpoint.clone()) {
        gateway.endpoint = v;
    }
    if let Some(v) = common.model.clone().or_else(|| g.model.clone()) {
        gateway.model = v;
    }
    if let Some(v) = common.auth_env.clone().or_else(|| g.auth_env.clone()) {
        gateway.auth_env = v;
    }
    if let Some(v) = common.concurrency.or(g.concurrency) {
        gateway.concurrency = v;
    }
    if let Some(v) = g.max_retries {
        gateway.max_retries = v;
    }
    if let Some(v) = g.timeout_secs {
        gateway.timeout = Duration::try_from_secs_f64(v).context("gateway.timeout_secs")?;
    }
    if let Some(v) = g.min_interval_ms {
        gateway.min_interval = Duration::from_millis(v);
    }
    if let Some(v) = g.initial_backoff_ms {
        gateway.initial_backoff = Duration::from_millis(v);
    }
    if let Some(v) = g.max_backoff_ms {
        gateway.max_backoff = Duration::from_millis(v);
    }

    let p = &file.pipeline;
    let mut pipeline = PipelineConfig {
        rng_seed: seed,
        ..PipelineConfig::default()
    };
    if let Some(v) = p.mask_rates.clone() {
        pipeline.mask_rates = v;
    }
    if let Some(v) = p.merge_probability {
        pipeline.merge_probability = v;
    }
    if let Some(v) = p.negatives_per_sentence {
        pipeline.negatives_per_sentence = v;
    }
    let exec = if common.sequential { Exec::Sequential } else { Exec::default() };
    Ok((
        Resolved {
            seed,
            gateway,
            pipeline,
            exec,
            common: common.clone(),
        },
        file,
    ))
}

/// The completion client: replay (optionally recording) or live HTTP.
enum Gateway {
    Replay(ReplayCompleter, PathBuf),
    Live(HttpCompleter),
}

impl Resolved {
    fn gateway(&self) -> Result<Gateway> {
        let live = || HttpCompleter::new(self.gateway.clone()).context("configuring completion client");
        match &self.common.replay {
            Some(path) => {
                let store = if self.common.record && !path.exists() {
                    ReplayStore::new()
                } else {
                    ReplayStore::load(path).with_context(|| format!("loading replay file {}", path.display()))?
                };
                let mut replay = ReplayCompleter::new(store, self.common.strict_replay);
                if self.common.record && !self.common.strict_replay {
                    replay = replay.with_fallback(Box::new(live()?));
                }
                Ok(Gateway::Replay(replay, path.clone()))
            }
            None => Ok(Gateway::Live(live()?)),
        }
    }
}

impl Gateway {
    fn completer(&self) -> &dyn Completer {
        match self {
            Gateway::Replay(r, _) => r,
            Gateway::Live(h) => h,
        }
    }

    /// Write back anything recorded during a `--record` run.
    fn finish(&self, record: bool) -> Result<()> {
        if let (true, Gateway::Replay(replay, path)) = (record, self) {
            replay
                .store()
                .save(path)
                .with_context(|| format!("saving replay file {}", path.display()))?;
        }
        Ok(())
    }
}

fn sentence_format(column: Option<usize>) -> SentenceFormat {
    column.map_or(SentenceFormat::PlainLines, SentenceFormat::TsvColumn)
}

pub fn run(cli: Cli) -> Result<()> {
    let (resolved, file) = resolve(&cli.common)?;
    match cli.command {
        Command::Generate(args) => cmd_generate(&resolved, args),
        Command::Label(args) => cmd_label(&resolved, args),
        Command::Build(args) => cmd_build(&resolved, args),
        Command::Train(args) => cmd_train(&resolved, &file.train, args),
        Command::Eval(args) => cmd_eval(&resolved, args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn cmd_generate(r: &Resolved, args: GenerateArgs) -> Result<()> {
    let sentences = load_sentences(&args.sentences, sentence_format(args.tsv_column))
        .with_context(|| format!("generate: reading sentences from {}", args.sentences.display()))?;
    let mut pipeline = r.pipeline.clone();
    if let Some(v) = args.mask_rates {
        pipeline.mask_rates = v;
    }
    if let Some(v) = args.merge_probability {
        pipeline.merge_probability = v;
    }
    let gw = r.gateway()?;
    let mut rng = ChaCha8Rng::seed_from_u64(pipeline.rng_seed);
    let out = generate_pairs(&sentences, &pipeline, gw.completer(), &mut rng).context("generate")?;
    gw.finish(r.common.record)?;
    write_generated_pairs(&args.out, &out.pairs)
        .with_context(|| format!("generate: writing {}", args.out.display()))?;
    println!(
        "sentences={} pairs={} dropped={}",
        sentences.len(),
        out.pairs.len(),
        out.dropped
    );
    Ok(())
}

fn cmd_label(r: &Resolved, args: LabelArgs) -> Result<()> {
    let pairs = read_generated_pairs(&args.pairs)
        .with_context(|| format!("label: reading pairs from {}", args.pairs.display()))?;
    let gw = r.gateway()?;
    let scored = label_scores(&pairs, gw.completer()).context("label")?;
    gw.finish(r.common.record)?;
    write_scored_pairs(&args.out, &scored).with_context(|| format!("label: writing {}", args.out.display()))?;
    let dropped = pairs.len() - scored.len();
    if dropped > 0 {
        log::warn!("{dropped} of {} pairs had no parsable score", pairs.len());
    }
    println!("input={} parsed={} dropped={}", pairs.len(), scored.len(), dropped);
    Ok(())
}

/// `records=N` followed by a count per provenance, in a fixed order.
pub fn manifest_line(records: &[ScoredPair]) -> String {
    let mut line = format!("records={}", records.len());
    for p in Provenance::ALL {
        let n = records.iter().filter(|r| r.provenance == p).count();
        line.push_str(&format!(" {}={}", p.as_str(), n));
    }
    line
}

fn cmd_build(r: &Resolved, args: BuildArgs) -> Result<()> {
    let need = |opt: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        match opt {
            Some(p) => Ok(p.clone()),
            None => bail!("build: mode {:?} requires --{flag}", args.mode),
        }
    };
    let claif = |r: &Resolved| -> Result<Vec<ScoredPair>> {
        let scored_path = need(&args.scored, "scored")?;
        let sentences_path = need(&args.sentences, "sentences")?;
        let mut records = read_scored_pairs(&scored_path)
            .with_context(|| format!("build: reading scored pairs from {}", scored_path.display()))?;
        if let Some((i, p)) = records.iter().enumerate().find(|(_, p)| p.provenance != Provenance::Generated) {
            bail!(
                "build: {} record {} has provenance {}, expected generated",
                scored_path.display(),
                i + 1,
                p.provenance
            );
        }
        let sentences = load_sentences(&sentences_path, sentence_format(args.tsv_column))
            .with_context(|| format!("build: reading sentences from {}", sentences_path.display()))?;
        let k = args.negatives.unwrap_or(r.pipeline.negatives_per_sentence);
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
        records.extend(sample_zero_negatives(&sentences, k, &mut rng).context("build: sampling negatives")?);
        Ok(records)
    };
    let nli = |gw: &Gateway| -> Result<(Vec<ScoredPair>, Vec<ScoredPair>, usize)> {
        let path = need(&args.nli, "nli")?;
        let triplets =
            read_nli_triplets(&path).with_context(|| format!("build: reading NLI triplets from {}", path.display()))?;
        let (pos, neg) = label_nli_triplets(&triplets, gw.completer()).context("build: labeling NLI pairs")?;
        Ok((pos, neg, triplets.len()))
    };

    let records = match args.mode {
        BuildMode::Claif => {
            if args.nli.is_some() {
                bail!("build: mode claif takes no --nli input");
            }
            claif(r)?
        }
        BuildMode::Clhaif => {
            if args.scored.is_some() || args.sentences.is_some() {
                bail!("build: mode clhaif takes only --nli");
            }
            let gw = r.gateway()?;
            let (mut pos, neg, n) = nli(&gw)?;
            gw.finish(r.common.record)?;
            if pos.len() < n {
                log::warn!("{} of {n} NLI positives had no parsable score", n - pos.len());
            }
            pos.extend(neg);
            pos
        }
        BuildMode::ClaifScaled => {
            let mut records = claif(r)?;
            let path = need(&args.nli, "nli")?;
            let triplets = read_nli_triplets(&path)
                .with_context(|| format!("build: reading NLI triplets from {}", path.display()))?;
            let gw = r.gateway()?;
            let (positives, _) = build_nli_pairs(&triplets);
            let scored = label_nli_positives(&positives, gw.completer()).context("build: labeling NLI pairs")?;
            gw.finish(r.common.record)?;
            records.extend(scored);
            records
        }
    };
    write_scored_pairs(&args.out, &records).with_context(|| format!("build: writing {}", args.out.display()))?;
    println!("{}", manifest_line(&records));
    Ok(())
}

fn cmd_train(r: &Resolved, file: &TrainSection, args: TrainArgs) -> Result<()> {
    let loss_kind = match (args.loss, &file.loss) {
        (Some(k), _) => k,
        (None, Some(s)) => s.parse().map_err(anyhow::Error::msg).context("train.loss")?,
        (None, None) => LossKind::Mse,
    };
    let defaults = TrainConfig::default();
    let base = TrainConfig {
        epochs: args.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: defaults.learning_rate,
        eval_interval: args.eval_interval.or(file.eval_interval).unwrap_or(defaults.eval_interval),
        loss_kind,
        temperature: args.temperature.or(file.temperature).unwrap_or(defaults.temperature),
        rng_seed: r.seed,
        exec: r.exec,
    };
    let rates = args
        .lr
        .or_else(|| file.learning_rates.clone())
        .unwrap_or_else(|| vec![defaults.learning_rate]);
    if rates.is_empty() {
        bail!("train: no learning rate given");
    }
    let dim = args.dim.or(file.dim).unwrap_or(32);
    let min_freq = args.min_freq.or(file.min_freq).unwrap_or(1);

    let records =
        read_scored_pairs(&args.data).with_context(|| format!("train: reading {}", args.data.display()))?;
    let dev = read_sts(&args.dev).with_context(|| format!("train: reading dev set {}", args.dev.display()))?;
    let vocab = build_vocab_from_texts(records.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]), min_freq)
        .context("train: building vocabulary")?;
    let dataset = TrainingSet::for_loss(records, loss_kind).context("train")?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(r.seed);
    let init = EncoderParams::init(vocab.len(), dim, &mut init_rng).context("train: initializing encoder")?;

    let mut log_text = String::new();
    let mut best: Option<(f64, TrainOutcome)> = None;
    for &lr in &rates {
        let config = TrainConfig {
            learning_rate: lr,
            ..base.clone()
        };
        let outcome = train(&config, &dataset, &dev, init.clone(), &vocab).with_context(|| format!("train: lr {lr}"))?;
        if rates.len() > 1 {
            log_text.push_str(&format!("lr={lr}\n"));
        }
        log_text.push_str(&outcome.log());
        if best.as_ref().is_none_or(|(_, b)| outcome.best.dev_spearman > b.best.dev_spearman) {
            best = Some((lr, outcome));
        }
    }
    let (lr, outcome) = best.expect("at least one learning rate");
    save_checkpoint(&args.out, &vocab, &outcome.best.params)
        .with_context(|| format!("train: writing checkpoint {}", args.out.display()))?;
    let log_path = args.log.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    fs::write(&log_path, &log_text).with_context(|| format!("train: writing log {}", log_path.display()))?;
    println!(
        "best lr={lr} step={} dev_spearman={:.6}",
        outcome.best.step, outcome.best.dev_spearman
    );
    Ok(())
}

fn parse_dataset_arg(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => bail!("eval: expected NAME=PATH, got `{s}`"),
    }
}

fn cmd_eval(r: &Resolved, args: EvalArgs) -> Result<()> {
    let (vocab, params) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("eval: loading checkpoint {}", args.checkpoint.display()))?;
    let mut seen = BTreeMap::new();
    let mut datasets = Vec::new();
    for spec in &args.datasets {
        let (name, path) = parse_dataset_arg(spec)?;
        if seen.insert(name.clone(), ()).is_some() {
            bail!("eval: dataset name `{name}` given twice");
        }
        datasets.push((name, path));
    }
    let report = evaluate_suite(&params, &vocab, &datasets, r.exec).context("eval")?;
    print!("{}", report.render());
    Ok(())
}

/// Histogram table: half-open bins except the last, counts and percentages.
pub fn render_stats(records: &[ScoredPair], bins: usize) -> Result<String> {
    let h = score_histogram(records, bins)?;
    let pct = h.percentages();
    let mut out = String::from("bin\tcount\tpercent\n");
    for (i, (count, p)) in h.counts.iter().zip(&pct).enumerate() {
        let close = if i + 1 == bins { ']' } else { ')' };
        out.push_str(&format!(
            "[{:.2},{:.2}{close}\t{count}\t{p:.2}\n",
            h.bin_edges[i],
            h.bin_edges[i + 1]
        ));
    }
    out.push_str(&format!("total\t{}\t{:.2}\n", h.total, pct.iter().sum::<f64>()));
    Ok(out)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let records =
        read_scored_pairs(&args.scored).with_context(|| format!("stats: reading {}", args.scored.display()))?;
    print!("{}", render_stats(&records, args.bins).context("stats")?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for argv in [
            vec!["sentsim", "generate", "--sentences", "s.txt", "--out", "p.jsonl", "--mask-rates", "0.0,0.5"],
            vec!["sentsim", "label", "--pairs", "p.jsonl", "--out", "s.jsonl", "--replay", "r.jsonl", "--strict-replay"],
            vec!["sentsim", "build", "--mode", "claif-scaled", "--out", "d.jsonl", "--nli", "n.tsv"],
            vec!["sentsim", "train", "--data", "d", "--dev", "v", "--out", "m", "--loss", "soft-infonce", "--lr", "1e-2,1e-3"],
            vec!["sentsim", "eval", "--checkpoint", "m", "--dataset", "sts=x.tsv"],
            vec!["sentsim", "--seed", "7", "stats", "--scored", "s.jsonl"],
        ] {
            Cli::try_parse_from(&argv).unwrap_or_else(|e| panic!("{argv:?}: {e}"));
        }
        assert!(Cli::try_parse_from(["sentsim"]).is_err());
        assert!(Cli::try_parse_from(["sentsim", "eval", "--checkpoint", "m"]).is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "seed = 9\n[gateway]\nconcurrency = 2\nmodel = \"m-file\"\n").unwrap();
        let cli = Cli::try_parse_from([
            "sentsim",
            "--config",
            cfg.to_str().unwrap(),
            "--concurrency",
            "7",
            "stats",
            "--scored",
            "x",
        ])
        .unwrap();
        let (r, _) = resolve(&cli.common).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.gateway.concurrency, 7);
        assert_eq!(r.gateway.model, "m-file");
        assert_eq!(r.gateway.max_retries, GatewayConfig::default().max_retries);

        fs::write(&cfg, "sed = 1\n").unwrap();
        assert!(resolve(&cli.common).is_err());
    }

    #[test]
    fn dataset_args() {
        assert_eq!(parse_dataset_arg("a=b/c.tsv").unwrap(), ("a".to_string(), PathBuf::from("b/c.tsv")));
        assert!(parse_dataset_arg("nope").is_err());
        assert!(parse_dataset_arg("=x").is_err());
    }

    #[test]
    fn stats_table_sums_to_hundred() {
        let recs: Vec<ScoredPair> = [0.05, 0.15, 0.95, 1.0]
            .iter()
            .map(|&s| ScoredPair::nli("a", "b", s, Provenance::NliPositive))
            .collect();
        let t = render_stats(&recs, 10).unwrap();
        assert!(t.starts_with("bin\tcount\tpercent\n[0.00,0.10)\t1\t25.00\n"));
        assert!(t.contains("[0.90,1.00]\t2\t50.00\n"));
        assert!(t.ends_with("total\t4\t100.00\n"));
        let empty = render_stats(&[], 10).unwrap();
        assert!(empty.ends_with("total\t0\t0.00\n"));
    }

    #[test]
    fn manifest_counts_each_provenance() {
        let recs = vec![
            ScoredPair::random_negative("a", "b"),
            ScoredPair::random_negative("a", "c"),
            ScoredPair::generated("a", "d", 0.5, 0.1),
        ];
        assert_eq!(
            manifest_line(&recs),
            "records=3 generated=1 random-negative=2 nli-positive=0 nli-hard-negative=0"
        );
    }
}
