//! Frozen teachers: anything that maps a sentence to a fixed-size vector.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use bitext_core::{EmbeddingMatrix, SentenceIndexMap};

use crate::error::{DistillError, Result};
use crate::vocab::SubwordVocab;

pub trait Teacher {
    fn dim(&self) -> usize;
    fn embed(&self, sentence: &str) -> Result<Vec<f64>>;
}

/// Fixed random projection of a bag of tokens: each distinct token gets a
/// seeded Gaussian vector and a sentence is the sum of its tokens' vectors.
///
/// Tokens are whitespace words, or subword pieces when a vocabulary is set.
#[derive(Debug, Clone)]
pub struct SyntheticTeacher {
    dim: usize,
    seed: u64,
    vocab: Option<SubwordVocab>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl SyntheticTeacher {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed, vocab: None }
    }

    pub fn with_vocab(dim: usize, seed: u64, vocab: SubwordVocab) -> Self {
        Self {
            dim,
            seed,
            vocab: Some(vocab),
        }
    }

    /// The projection column for one token.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed.rotate_left(17));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn tokens(&self, sentence: &str) -> Vec<String> {
        match &self.vocab {
            Some(v) => v
                .tokenize(sentence)
                .into_iter()
                .map(|id| v.piece(id).unwrap_or_default().to_string())
                .collect(),
            None => sentence.split_whitespace().map(str::to_string).collect(),
        }
    }
}

impl Teacher for SyntheticTeacher {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        for tok in self.tokens(sentence) {
            for (o, v) in out.iter_mut().zip(self.token_vector(&tok)) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// Precomputed teacher embeddings looked up by exact sentence text.
#[derive(Debug, Clone)]
pub struct TableTeacher {
    matrix: EmbeddingMatrix,
    rows: HashMap<String, usize>,
}

impl TableTeacher {
    pub fn new(matrix: EmbeddingMatrix, sentences: SentenceIndexMap) -> Result<Self> {
        sentences.check_pairs_with(&matrix)?;
        let rows = sentences.ids().iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { matrix, rows })
    }

    /// Loads an EMB1 file and a text file with one sentence per row.
    pub fn load(emb: impl AsRef<Path>, sentences: impl AsRef<Path>) -> Result<Self> {
        Self::new(EmbeddingMatrix::load_headered(emb)?, SentenceIndexMap::load(sentences)?)
    }
}

impl Teacher for TableTeacher {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>> {
        let row = self
            .rows
            .get(sentence)
            .ok_or_else(|| DistillError::TeacherMiss(sentence.to_string()))?;
        Ok(self.matrix.row(*row).iter().map(|&v| f64::from(v)).collect())
    }
}
