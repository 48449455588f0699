//! Writes the bundled replay fixtures under `fixtures/sample/`.
//!
//! The generation prompts for seed 42 are planned exactly as `sentsim
//! generate` plans them, and the i-th prompt of each sentence is answered with
//! the i-th rewrite listed below. Scoring prompts are answered with the listed
//! scores. Completions carry a leading space, as the completions API returns
//! them. When two rates of one sentence render the same prompt, the replay
//! can only hold one answer, so the earlier rewrite is served for both. Run
//! from the crate root:
//!
//! ```text
//! cargo run --example build_fixtures
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sentsim::corpus::{write_nli_triplets, write_sentences, NliTriplet, Sentence};
use sentsim::gateway::ReplayStore;
use sentsim::generation::{plan_generation, render_scoring_prompt, PipelineConfig};

const SEED: u64 = 42;

const CLAIF: [(&str, [(&str, &str); 9]); 3] = [
    (
        "a plane is taking off .",
        [
            ("an aircraft is departing .", "0.80"),
            ("The airplane is taking off.", "0.80"),
            ("A plane is taking off swiftly", "0.90"),
            ("The blue plane is taking off.", "0.75"),
            ("Airplane is flying.", "0.67"),
            ("Bob and Joe are taking a walk.", "0.00"),
            ("Aeroplane is flying", "0.67"),
            ("Put off steam", "0.00"),
            ("Turn off lights", "0.00"),
        ],
    ),
    (
        "a man is playing a large flute .",
        [
            ("A male individual is performing on a big flute.", "0.86"),
            ("a man is playing a large flute.", "1.00"),
            ("He she is playing a large flute.", "0.78"),
            ("a man played a wooden flute.", "0.71"),
            ("a flute is not a wooden flute", "0.20"),
            ("a boy playing a large drum", "0.33"),
            ("a man is wise.", "0.00"),
            ("The old man stood .", "0.00"),
            ("The quick brown fox jumps over the lazy dog", "0.00"),
        ],
    ),
    (
        "three men are playing chess .",
        [
            ("There are three men playing chess.", "0.94"),
            ("Three children are playing chess.", "0.80"),
            ("Three kings are playing chess.", "0.87"),
            ("They are playing chess .", "0.80"),
            ("three men played chess together", "0.78"),
            ("three men are walking", "0.00"),
            ("John and Mary were playing chess together", "0.50"),
            ("I play blitz chess online", "0.20"),
            ("I like to play soccer and tennis.", "0.00"),
        ],
    ),
];

/// Premise, entailment, score; the contradictions are written for these
/// fixtures.
const CLHAIF: [(&str, &str, &str, &str); 8] = [
    ("The other men shuffled.", "The other men were shuffled around.", "The other men stood perfectly still.", "0.78"),
    ("well it's been very interesting", "It has been very intriguing.", "It has been extremely dull.", "0.90"),
    (
        "He started slowly back to the bunkhouse.",
        "He returned slowly to the bunkhouse.",
        "He sprinted away from the bunkhouse.",
        "0.91",
    ),
    ("well what the market can bear and", "The market can bear some.", "The market can bear nothing at all.", "0.71"),
    ("She smiled back.", "She was happy.", "She frowned and looked away.", "0.25"),
    (
        "The economy could be still better.",
        "It still have room for improvement.",
        "The economy could not be any better.",
        "0.55",
    ),
    (
        "The man should have died instantly.",
        "The man should not have been alive.",
        "The man was never in any danger.",
        "0.14",
    ),
    ("Turned out, I wasn't completely wrong.", "I was not totally wrong.", "I was completely wrong.", "0.8"),
];

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample");
    fs::create_dir_all(&dir).expect("create fixture dir");

    let sentences: Vec<Sentence> = CLAIF.iter().enumerate().map(|(i, (s, _))| Sentence::new(i, *s)).collect();
    write_sentences(&dir.join("sentences.txt"), &sentences).expect("write sentences");
    let triplets: Vec<NliTriplet> = CLHAIF
        .iter()
        .map(|(p, e, c, _)| NliTriplet::new(*p, *e, *c))
        .collect();
    write_nli_triplets(&dir.join("nli.tsv"), &triplets).expect("write triplets");

    let config = PipelineConfig {
        rng_seed: SEED,
        ..PipelineConfig::default()
    };
    let plan = plan_generation(&sentences, &config, &mut ChaCha8Rng::seed_from_u64(SEED)).expect("plan");
    let mut store = ReplayStore::new();
    for p in &plan {
        let (original, rows) = &CLAIF[p.sentence_index];
        let (generated, score) = rows[p.rate_index];
        if let Some(previous) = store.lookup(&p.prompt) {
            println!(
                "`{original}` at rate index {}: prompt repeats an earlier one, serving `{}`",
                p.rate_index,
                previous.trim()
            );
            continue;
        }
        store.record(&p.prompt, format!(" {generated}"));
        store.record(&render_scoring_prompt(original, generated), format!(" {score}"));
    }
    for (premise, entailment, _, score) in CLHAIF {
        store.record(&render_scoring_prompt(premise, entailment), format!(" {score}"));
    }
    store.save(&dir.join("replay.jsonl")).expect("write replay");
    println!("{} replay entries in {}", store.len(), dir.display());
}
