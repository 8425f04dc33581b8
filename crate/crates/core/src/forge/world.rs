//! Bundled synthetic QA corpus.
//!
//! Each source asks which city goes with an entity. Its supporting documents
//! name the entity and mention the answer city several times; distractor
//! documents name other entities and at most one decoy city. The answer is
//! therefore the most frequent city of any context built from the source.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SourceSample;
use crate::policy::Vocab;
use crate::rng::stream;

pub const N_CITIES: usize = 16;
pub const N_ENTITIES: usize = 12;
pub const FILLERS: [&str; 20] = [
    "went", "to", "near", "river", "market", "old", "new", "road", "saw", "met", "and", "of", "with", "was", "later",
    "then", "by", "hill", "north", "south",
];
pub const QUESTION_WORDS: [&str; 4] = ["which", "city", "for", "?"];
pub const RESPONSE_WORDS: [&str; 4] = ["The", "answer", "is:", "none"];
pub const NO_ANSWER: &str = "The answer is: none";

pub fn city(i: usize) -> String {
    format!("c{i:02}")
}

pub fn entity(i: usize) -> String {
    format!("p{i:02}")
}

/// `"The answer is: {answer}"`.
pub fn gold_response(answer: &str) -> String {
    format!("The answer is: {answer}")
}

/// Vocabulary covering every token the corpus can produce (59 tokens).
pub fn world_vocab() -> Vocab {
    let words = (0..N_CITIES)
        .map(city)
        .chain((0..N_ENTITIES).map(entity))
        .chain(FILLERS.iter().map(|s| String::from(*s)))
        .chain(QUESTION_WORDS.iter().map(|s| String::from(*s)))
        .chain(RESPONSE_WORDS.iter().map(|s| String::from(*s)));
    Vocab::new(words).expect("world vocabulary is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_sources: usize,
    pub n_distractors: usize,
    pub supporting_docs: usize,
    pub answer_mentions_per_doc: usize,
    /// Probability that a distractor mentions a decoy city.
    pub decoy_prob: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { n_sources: 600, n_distractors: 3000, supporting_docs: 2, answer_mentions_per_doc: 3, decoy_prob: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub sources: Vec<SourceSample>,
    pub distractors: Vec<String>,
}

fn filler<R: Rng + ?Sized>(rng: &mut R) -> String {
    String::from(*FILLERS.choose(rng).unwrap())
}

pub fn generate(cfg: &WorldConfig) -> World {
    let mut rng = stream(cfg.seed, u64::MAX);
    let sources = (0..cfg.n_sources)
        .map(|_| {
            let e = entity(rng.gen_range(0..N_ENTITIES));
            let answer = city(rng.gen_range(0..N_CITIES));
            let supporting_docs = (0..cfg.supporting_docs.max(1))
                .map(|_| {
                    let len = rng.gen_range(9..=12);
                    let mut body: Vec<String> = (0..cfg.answer_mentions_per_doc).map(|_| answer.clone()).collect();
                    while body.len() < len - 1 {
                        body.push(filler(&mut rng));
                    }
                    body.shuffle(&mut rng);
                    let mut doc = Vec::with_capacity(len);
                    doc.push(e.clone());
                    doc.extend(body);
                    doc.join(" ")
                })
                .collect();
            SourceSample { question: format!("which city for {e} ?"), answer, supporting_docs }
        })
        .collect();
    let distractors = (0..cfg.n_distractors)
        .map(|_| {
            let len = rng.gen_range(8..=13);
            let mut body: Vec<String> = Vec::with_capacity(len);
            if rng.gen_bool(cfg.decoy_prob) {
                body.push(city(rng.gen_range(0..N_CITIES)));
            }
            while body.len() < len - 1 {
                body.push(filler(&mut rng));
            }
            body.shuffle(&mut rng);
            let mut doc = Vec::with_capacity(len);
            doc.push(entity(rng.gen_range(0..N_ENTITIES)));
            doc.extend(body);
            doc.join(" ")
        })
        .collect();
    World { sources, distractors }
}
