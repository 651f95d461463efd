//! Synthetic parallel languages for tests and demos.
//!
//! A toy language has `concepts` meanings. The teacher side writes concept
//! `i` as the token `c{i:03}`; the student side writes it as one of
//! `forms` made-up syllable words (synonyms). Sentences are walks over
//! concepts mixing uniform draws with a sparse Markov chain in which every
//! concept has a few preferred successors, so that context says something
//! about a missing word.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

#[derive(Debug, Clone)]
pub struct ToyLanguage {
    forms: Vec<Vec<String>>,
    successors: Vec<Vec<usize>>,
    successor_prob: f64,
    min_len: usize,
    max_len: usize,
}

impl ToyLanguage {
    /// `forms` synonyms per concept. Each next word follows the successor
    /// chain with probability `successor_prob` and is uniform otherwise.
    /// Sentence lengths are drawn from `min_len..=max_len` words.
    pub fn new(concepts: usize, forms: usize, successor_prob: f64, min_len: usize, max_len: usize, seed: u64) -> Self {
        assert!(concepts > 0 && forms > 0 && min_len > 0 && min_len <= max_len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        let mut word = |rng: &mut ChaCha8Rng| loop {
            let syllables = rng.random_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
                .collect();
            if seen.insert(w.clone()) {
                return w;
            }
        };
        let forms = (0..concepts).map(|_| (0..forms).map(|_| word(&mut rng)).collect()).collect();
        let successors = (0..concepts)
            .map(|_| (0..3).map(|_| rng.random_range(0..concepts)).collect())
            .collect();
        Self {
            forms,
            successors,
            successor_prob,
            min_len,
            max_len,
        }
    }

    pub fn concepts(&self) -> usize {
        self.forms.len()
    }

    pub fn forms_per_concept(&self) -> usize {
        self.forms[0].len()
    }

    pub fn student_word(&self, concept: usize, form: usize) -> &str {
        &self.forms[concept][form]
    }

    pub fn teacher_word(concept: usize) -> String {
        format!("c{concept:03}")
    }

    /// A sequence of concepts.
    pub fn walk<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let n = rng.random_range(self.min_len..=self.max_len);
        let mut out = Vec::with_capacity(n);
        let mut c = rng.random_range(0..self.concepts());
        out.push(c);
        while out.len() < n {
            c = if rng.random::<f64>() < self.successor_prob {
                *self.successors[c].choose(rng).unwrap()
            } else {
                rng.random_range(0..self.concepts())
            };
            out.push(c);
        }
        out
    }

    /// Student rendering of a walk, each word's form drawn from `allowed`.
    pub fn student_sentence<R: Rng>(&self, walk: &[usize], allowed: &[usize], rng: &mut R) -> String {
        walk.iter()
            .map(|&c| self.student_word(c, *allowed.choose(rng).unwrap()))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn teacher_sentence(walk: &[usize]) -> String {
        walk.iter().map(|&c| Self::teacher_word(c)).collect::<Vec<_>>().join(" ")
    }

    /// `n` (student, teacher) pairs using the given synonym forms.
    pub fn pairs<R: Rng>(&self, n: usize, allowed: &[usize], rng: &mut R) -> Vec<(String, String)> {
        (0..n)
            .map(|_| {
                let w = self.walk(rng);
                (self.student_sentence(&w, allowed, rng), Self::teacher_sentence(&w))
            })
            .collect()
    }

    /// `n` student-side lines using the given synonym forms.
    pub fn monolingual<R: Rng>(&self, n: usize, allowed: &[usize], rng: &mut R) -> Vec<String> {
        (0..n)
            .map(|_| {
                let w = self.walk(rng);
                self.student_sentence(&w, allowed, rng)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_unique_and_sentences_align() {
        let lang = ToyLanguage::new(50, 4, 0.9, 3, 6, 1);
        let mut all = BTreeSet::new();
        for c in 0..50 {
            for f in 0..4 {
                assert!(all.insert(lang.student_word(c, f).to_string()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (s, t) in lang.pairs(20, &[0, 1], &mut rng) {
            assert_eq!(s.split(' ').count(), t.split(' ').count());
            assert!((3..=6).contains(&t.split(' ').count()));
        }
    }
}
