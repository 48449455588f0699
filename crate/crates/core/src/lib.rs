//! Sentence-similarity toolkit: build LLM-scored sentence pairs, train small
//! mean-pooled bi-/cross-encoders on them, and evaluate embeddings on STS data.
//!
//! Module map:
//! - [`corpus`]: sentences, scored pairs, NLI triplets, STS examples and their file formats
//! - [`gateway`]: completion clients (live HTTP and replay) and score parsing
//! - [`generation`]: masking, prompt rendering, pair generation and labeling
//! - [`encoder`]: vocabulary, encoder parameters, forward/backward passes, checkpoints
//! - [`losses`]: MSE-on-cosine, InfoNCE, soft InfoNCE and BCE
//! - [`trainer`]: Adam, the training loop and gradient checking
//! - [`sts_eval`]: Spearman correlation and STS evaluation reports
//! - [`planted`]: synthetic planted-model data for end-to-end checks
//! - [`cli`]: the `sentsim` command line

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod gateway;
pub mod generation;
pub mod losses;
pub mod par;
pub mod planted;
pub mod sts_eval;
pub mod trainer;

pub use corpus::{NliTriplet, Provenance, ScoreHistogram, ScoredPair, Sentence, StsExample};
pub use encoder::{Embedding, EncoderParams, GradientBundle, Vocab};
pub use par::Exec;
