//! Synthetic SRL corpora with lexically determined frames.
//!
//! A sentence is one or two clauses joined by `and`. Each clause has one
//! verb (the predicate) and a few argument chunks `marker [adjective] noun`
//! in random order, optionally interleaved with filler words. The marker word
//! determines the role; each clause's arguments belong to its own verb.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Argument, PredicateFrame, Sentence, SrlAnnotation};

/// Marker word and role of each argument type.
pub const MARKERS: [(&str, &str); 5] = [
    ("the", "A0"),
    ("a", "A1"),
    ("to", "A2"),
    ("in", "AM-LOC"),
    ("on", "AM-TMP"),
];

const VERBS: [&str; 12] = [
    "eats", "sees", "gives", "takes", "finds", "makes", "sends", "keeps", "brings", "holds",
    "moves", "calls",
];
const NOUNS: [&str; 20] = [
    "dog", "cat", "bird", "car", "book", "tree", "house", "river", "table", "girl", "boy",
    "farmer", "city", "road", "box", "letter", "teacher", "garden", "window", "morning",
];
const ADJECTIVES: [&str; 8] = [
    "big", "small", "red", "old", "new", "quiet", "green", "happy",
];
const FILLERS: [&str; 3] = ["so", "then", "really"];
const JOINER: &str = "and";

/// Draws allowed per sentence before the length range is declared unreachable.
const MAX_ATTEMPTS: usize = 100_000;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid synthetic corpus configuration: {0}")]
    Config(String),

    #[error("no sentences of length {min_len}..={max_len} could be generated")]
    Unreachable { min_len: usize, max_len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_predicates: usize,
    pub max_args: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 500,
            min_len: 1,
            max_len: 12,
            max_predicates: 2,
            max_args: 3,
            seed: 0,
        }
    }
}

struct Clause {
    tokens: Vec<String>,
    predicate: usize,
    args: Vec<Argument>,
}

fn clause(rng: &mut ChaCha8Rng, max_args: usize) -> Clause {
    let k = rng.gen_range(1..=max_args.clamp(1, MARKERS.len()));
    let mut chunks: Vec<Option<usize>> = MARKERS
        .choose_multiple(rng, k)
        .map(|m| Some(MARKERS.iter().position(|x| x == m).expect("marker")))
        .collect();
    chunks.push(None);
    chunks.shuffle(rng);
    let mut tokens = Vec::new();
    let mut predicate = 0;
    let mut args = Vec::new();
    for chunk in chunks {
        if rng.gen_bool(0.15) {
            tokens.push(FILLERS.choose(rng).expect("fillers").to_string());
        }
        match chunk {
            None => {
                tokens.push(VERBS.choose(rng).expect("verbs").to_string());
                predicate = tokens.len();
            }
            Some(m) => {
                let start = tokens.len() + 1;
                tokens.push(MARKERS[m].0.to_owned());
                if rng.gen_bool(0.4) {
                    tokens.push(ADJECTIVES.choose(rng).expect("adjectives").to_string());
                }
                tokens.push(NOUNS.choose(rng).expect("nouns").to_string());
                args.push(Argument::new(start, tokens.len(), MARKERS[m].1));
            }
        }
    }
    Clause {
        tokens,
        predicate,
        args,
    }
}

fn sentence(rng: &mut ChaCha8Rng, config: &SynthConfig) -> Result<SrlAnnotation, SynthError> {
    for _ in 0..MAX_ATTEMPTS {
        let clauses = rng.gen_range(1..=config.max_predicates.max(1));
        let mut tokens: Vec<String> = Vec::new();
        let mut frames = Vec::new();
        for c in 0..clauses {
            if c > 0 {
                tokens.push(JOINER.to_owned());
            }
            let offset = tokens.len();
            let cl = clause(rng, config.max_args);
            tokens.extend(cl.tokens);
            let args = cl
                .args
                .into_iter()
                .map(|a| Argument::new(a.span.start + offset, a.span.end + offset, a.role))
                .collect();
            frames.push(PredicateFrame::new(cl.predicate + offset, args));
        }
        if tokens.len() < config.min_len || tokens.len() > config.max_len {
            continue;
        }
        let sentence = Sentence::new(tokens).expect("clauses are non-empty");
        return Ok(SrlAnnotation::new(sentence, frames).expect("generated frames are valid"));
    }
    Err(SynthError::Unreachable {
        min_len: config.min_len,
        max_len: config.max_len,
    })
}

/// Generate `config.sentences` annotations deterministically from the seed.
pub fn synth_corpus(config: &SynthConfig) -> Result<Vec<SrlAnnotation>, SynthError> {
    if config.min_len > config.max_len || config.max_len < 3 {
        return Err(SynthError::Config(format!(
            "length range {}..={} is empty or shorter than one clause",
            config.min_len, config.max_len
        )));
    }
    if config.max_predicates == 0 || config.max_args == 0 {
        return Err(SynthError::Config(
            "predicates and arguments per clause must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.sentences)
        .map(|_| sentence(&mut rng, config))
        .collect()
}
