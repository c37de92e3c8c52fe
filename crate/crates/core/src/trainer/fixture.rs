//! Seeded synthetic mini-corpus for training smoke runs.
//!
//! Documents are short strings of pseudo-words. Each query names three of
//! its document's words through a fixed synonym spelling and pads them with
//! stopwords, so queries share no content tokens with documents and every
//! query has exactly three content words.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, WeightedPair};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniCorpusSpec {
    pub n_docs: usize,
    pub queries_per_doc: usize,
    pub vocab: usize,
    pub words_per_doc: usize,
    pub seed: u64,
}

impl Default for MiniCorpusSpec {
    fn default() -> Self {
        Self {
            n_docs: 200,
            queries_per_doc: 3,
            vocab: 400,
            words_per_doc: 8,
            seed: 7,
        }
    }
}

const TEMPLATES: [&str; 4] = [
    "what is the {} of the {} and {}",
    "how does {} do {} with {}",
    "why are {} and {} about {}",
    "which {} is for {} or {}",
];

const DOC_ONSETS: [&str; 10] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r"];
const SYN_ONSETS: [&str; 10] = ["bl", "dr", "fl", "gr", "kr", "pl", "pr", "st", "tr", "vr"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Three-syllable pseudo-word for index `i` (unique for `i < 125_000`).
fn pseudo_word(onsets: &[&str; 10], mut i: usize) -> String {
    let mut w = String::new();
    for _ in 0..3 {
        let syl = i % 50;
        i /= 50;
        w.push_str(onsets[syl / 5]);
        w.push_str(VOWELS[syl % 5]);
    }
    w.push('x');
    w
}

pub fn doc_word(i: usize) -> String {
    pseudo_word(&DOC_ONSETS, i)
}

pub fn synonym(i: usize) -> String {
    pseudo_word(&SYN_ONSETS, i)
}

fn fill(template: &str, words: &[String]) -> String {
    let mut out = template.to_string();
    for w in words {
        out = out.replacen("{}", w, 1);
    }
    out
}

/// Documents and aligned `(query, doc)` pairs with `raw_cw = 3`.
pub fn mini_corpus(spec: MiniCorpusSpec) -> (Corpus, Vec<WeightedPair>) {
    assert!(spec.words_per_doc >= 3 && spec.vocab >= spec.words_per_doc && spec.vocab <= 125_000);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut pairs = Vec::with_capacity(spec.n_docs * spec.queries_per_doc);
    for d in 0..spec.n_docs {
        let id = format!("doc{d:04}");
        let topic: Vec<usize> = sample(&mut rng, spec.vocab, spec.words_per_doc).into_vec();
        let text = topic.iter().map(|&w| doc_word(w)).collect::<Vec<_>>().join(" ");
        docs.push(Document::new(&id, text));
        for _ in 0..spec.queries_per_doc {
            let picks: Vec<String> = sample(&mut rng, topic.len(), 3)
                .into_iter()
                .map(|k| synonym(topic[k]))
                .collect();
            let template = TEMPLATES[rng.gen_range(0..TEMPLATES.len())];
            let mut pair = WeightedPair::new(fill(template, &picks), &id);
            pair.raw_cw = 3;
            pairs.push(pair);
        }
    }
    (Corpus::new(docs).expect("generated ids are unique"), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{content_word_count, StopwordTable, TokenizerSpec};
    use std::collections::HashSet;

    #[test]
    fn deterministic_and_equal_cw() {
        let spec = MiniCorpusSpec {
            n_docs: 20,
            ..Default::default()
        };
        let (c1, p1) = mini_corpus(spec);
        let (c2, p2) = mini_corpus(spec);
        assert_eq!(c1.docs(), c2.docs());
        assert_eq!(p1, p2);
        assert_eq!(p1.len(), 60);
        let sw = StopwordTable::builtin("en").unwrap();
        let tok = TokenizerSpec::english();
        for p in &p1 {
            assert_eq!(content_word_count(&p.query, &tok, &sw).unwrap(), 3, "{}", p.query);
        }
    }

    #[test]
    fn pseudo_words_are_distinct_across_families() {
        let docs: HashSet<String> = (0..400).map(doc_word).collect();
        let syns: HashSet<String> = (0..400).map(synonym).collect();
        assert_eq!(docs.len(), 400);
        assert_eq!(syns.len(), 400);
        assert!(docs.is_disjoint(&syns));
    }
}
