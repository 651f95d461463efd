//! Byte-pair-style subword vocabulary over Unicode characters.
//!
//! Spaces are folded into a word-boundary marker (`▁`) attached to the
//! start of each word, so detokenization is a plain concatenation and the
//! round trip is exact for any text drawn from the training alphabet.

use std::collections::{BTreeMap, HashMap};

use crate::error::{DistillError, Result};

pub const WORD_MARK: char = '▁';

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<mask>", "<s>", "</s>"];
pub const NUM_SPECIAL: usize = SPECIAL_TOKENS.len();

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub left: u32,
    pub right: u32,
    pub result: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocab {
    pieces: Vec<String>,
    merges: Vec<Merge>,
    piece_ids: HashMap<String, u32>,
    merge_ranks: HashMap<(u32, u32), (usize, u32)>,
}

/// Splits text into marker-prefixed words: `"a  b"` -> `["▁a", "▁", "▁b"]`.
fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in text.split(' ') {
        let mut w = String::with_capacity(part.len() + 3);
        w.push(WORD_MARK);
        w.push_str(part);
        out.push(w);
    }
    out
}

impl SubwordVocab {
    /// Learns up to `size` pieces (special tokens included) from `corpus`.
    ///
    /// Each round merges the most frequent adjacent pair of pieces; ties go
    /// to the lexicographically smallest `(left, right)` pair. Training
    /// stops early once no pair occurs at least twice.
    pub fn train<S: AsRef<str>>(corpus: &[S], size: usize) -> Result<Self> {
        if corpus.iter().all(|l| l.as_ref().trim().is_empty()) {
            return Err(DistillError::EmptyCorpus);
        }
        let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
        for line in corpus {
            for w in words(line.as_ref()) {
                *word_counts.entry(w).or_default() += 1;
            }
        }
        let mut alphabet: Vec<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        let required = NUM_SPECIAL + alphabet.len();
        if size < required {
            return Err(DistillError::SizeTooSmall { size, required });
        }

        let mut vocab = Self::from_parts(
            SPECIAL_TOKENS
                .iter()
                .map(|s| s.to_string())
                .chain(alphabet.iter().map(|c| c.to_string()))
                .collect(),
            Vec::new(),
        )?;

        let mut segmented: Vec<(Vec<u32>, usize)> = word_counts
            .iter()
            .map(|(w, &n)| (w.chars().map(|c| vocab.piece_ids[&c.to_string()]).collect(), n))
            .collect();

        while vocab.pieces.len() < size {
            let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
            for (syms, n) in &segmented {
                for pair in syms.windows(2) {
                    *pair_counts.entry((pair[0], pair[1])).or_default() += n;
                }
            }
            let best = pair_counts
                .into_iter()
                .filter(|&(_, n)| n >= 2)
                .max_by(|(a, na), (b, nb)| {
                    na.cmp(nb).then_with(|| {
                        let ka = (&vocab.pieces[a.0 as usize], &vocab.pieces[a.1 as usize]);
                        let kb = (&vocab.pieces[b.0 as usize], &vocab.pieces[b.1 as usize]);
                        kb.cmp(&ka)
                    })
                });
            let Some(((left, right), _)) = best else {
                break;
            };
            let merged = format!("{}{}", vocab.pieces[left as usize], vocab.pieces[right as usize]);
            let result = match vocab.piece_ids.get(&merged) {
                Some(&id) => id,
                None => {
                    let id = vocab.pieces.len() as u32;
                    vocab.piece_ids.insert(merged.clone(), id);
                    vocab.pieces.push(merged);
                    id
                }
            };
            vocab.merge_ranks.insert((left, right), (vocab.merges.len(), result));
            vocab.merges.push(Merge { left, right, result });
            for (syms, _) in &mut segmented {
                apply_merge(syms, left, right, result);
            }
        }
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from stored pieces and merges.
    pub fn from_parts(pieces: Vec<String>, merges: Vec<Merge>) -> Result<Self> {
        if pieces.len() < NUM_SPECIAL || pieces.iter().zip(SPECIAL_TOKENS).any(|(p, s)| p != s) {
            return Err(DistillError::BadModelFile("vocabulary must start with the special tokens".into()));
        }
        let mut piece_ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if piece_ids.insert(p.clone(), i as u32).is_some() {
                return Err(DistillError::BadModelFile(format!("duplicate piece {p:?}")));
            }
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, m) in merges.iter().enumerate() {
            let n = pieces.len() as u32;
            if m.left >= n || m.right >= n || m.result >= n {
                return Err(DistillError::BadModelFile("merge refers to an unknown piece".into()));
            }
            merge_ranks.insert((m.left, m.right), (rank, m.result));
        }
        Ok(Self {
            pieces,
            merges,
            piece_ids,
            merge_ranks,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.piece_ids.get(piece).copied()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIAL
    }

    /// Subword ids for `text`; never empty.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in words(text) {
            let mut syms: Vec<u32> = w
                .chars()
                .map(|c| {
                    let mut buf = [0u8; 4];
                    self.id(c.encode_utf8(&mut buf)).unwrap_or(UNK)
                })
                .collect();
            loop {
                let best = syms
                    .windows(2)
                    .filter_map(|p| self.merge_ranks.get(&(p[0], p[1])).map(|&(rank, res)| (rank, p[0], p[1], res)))
                    .min_by_key(|&(rank, ..)| rank);
                let Some((_, left, right, result)) = best else {
                    break;
                };
                apply_merge(&mut syms, left, right, result);
            }
            out.extend(syms);
        }
        out
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for &id in ids {
            if id == UNK {
                s.push('\u{FFFD}');
            } else if !Self::is_special(id) {
                if let Some(p) = self.piece(id) {
                    s.push_str(p);
                }
            }
        }
        let s = s.replace(WORD_MARK, " ");
        match s.strip_prefix(' ') {
            Some(rest) => rest.to_string(),
            None => s,
        }
    }
}

fn apply_merge(syms: &mut Vec<u32>, left: u32, right: u32, result: u32) {
    let mut i = 0;
    let mut out = Vec::with_capacity(syms.len());
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(result);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    *syms = out;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_is_covered() {
        let v = SubwordVocab::train(&["aaaa bbbb"], 10).unwrap();
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_some());
        assert!(v.id(&WORD_MARK.to_string()).is_some());
        assert!(v.len() <= 10);
    }

    #[test]
    fn too_small_and_empty() {
        assert!(matches!(
            SubwordVocab::train(&["abc"], 6),
            Err(DistillError::SizeTooSmall { size: 6, required: 9 })
        ));
        assert!(matches!(
            SubwordVocab::train::<&str>(&[], 100),
            Err(DistillError::EmptyCorpus)
        ));
    }

    #[test]
    fn most_frequent_pair_merges_first() {
        // Pair counts over "▁xyz" x3, "▁xy" x1, "▁zz" x1:
        //   (x,y)=4  (▁,x)=4  (y,z)=3  (▁,z)=1  (z,z)=1
        // (x,y) and (▁,x) tie at 4; "x" (U+0078) sorts before "▁" (U+2581)
        // so (x,y) wins, after which (▁,xy) is the most frequent pair with 4.
        let corpus = ["xyz", "xyz xy", "xyz", "zz"];
        let v = SubwordVocab::train(&corpus, NUM_SPECIAL + 4 + 2).unwrap();
        let merged: Vec<&str> = v.merges().iter().map(|m| v.piece(m.result).unwrap()).collect();
        assert_eq!(merged, vec!["xy", "▁xy"]);
    }

    #[test]
    fn round_trip() {
        let corpus = ["the cat sat on the mat", "a dog  ran", " leading and trailing "];
        let v = SubwordVocab::train(&corpus, 40).unwrap();
        for s in ["the mat sat", "cat", "", "  a  d ", "dog ran on a mat"] {
            assert_eq!(v.detokenize(&v.tokenize(s)), s);
            assert!(!v.tokenize(s).is_empty());
        }
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = SubwordVocab::train(&["abc"], 20).unwrap();
        assert!(v.tokenize("aqz").contains(&UNK));
    }

    #[test]
    fn deterministic() {
        let corpus = ["lorem ipsum dolor sit amet", "ipsum lorem", "dolor dolor amet"];
        assert_eq!(SubwordVocab::train(&corpus, 30).unwrap(), SubwordVocab::train(&corpus, 30).unwrap());
    }
}
