//! Global bitext mining over two embedded monolingual corpora.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::margin::{MarginConfig, MarginFn, MarginScorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinedPair {
    pub src_idx: usize,
    pub tgt_idx: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    #[default]
    Union,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Union => "union",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "forward" | "fwd" => Ok(Direction::Forward),
            "backward" | "bwd" => Ok(Direction::Backward),
            "union" => Ok(Direction::Union),
            other => Err(format!("unknown direction {other:?} (expected forward, backward or union)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    #[serde(flatten)]
    pub margin: MarginConfig,
    pub threshold: f64,
    pub candidates_per_query: usize,
    pub direction: Direction,
}

impl MineConfig {
    /// Threshold used when none is given: 1.06 for ratio, 0 otherwise.
    pub fn default_threshold(function: MarginFn) -> f64 {
        match function {
            MarginFn::Ratio => 1.06,
            MarginFn::Distance | MarginFn::Absolute => 0.0,
        }
    }

    pub fn new(margin: MarginConfig) -> Self {
        Self {
            margin,
            threshold: Self::default_threshold(margin.function),
            candidates_per_query: 1,
            direction: Direction::Union,
        }
    }
}

impl Default for MineConfig {
    fn default() -> Self {
        Self::new(MarginConfig::default())
    }
}

/// Mined pairs together with per-direction counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineOutcome {
    pub pairs: Vec<MinedPair>,
    pub forward_count: Option<usize>,
    pub backward_count: Option<usize>,
    pub union_count: Option<usize>,
}

fn sort_pairs(pairs: &mut [MinedPair]) {
    pairs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.src_idx.cmp(&b.src_idx))
            .then(a.tgt_idx.cmp(&b.tgt_idx))
    });
}

fn validate(cfg: &MineConfig) -> Result<()> {
    if cfg.candidates_per_query == 0 {
        return Err(Error::ZeroK);
    }
    Ok(())
}

fn collect_forward(lists: &[Vec<(usize, f64)>], threshold: f64) -> Vec<MinedPair> {
    let mut out: Vec<MinedPair> = lists
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .filter(|(_, s)| *s >= threshold)
                .map(move |&(j, score)| MinedPair {
                    src_idx: i,
                    tgt_idx: j,
                    score,
                })
        })
        .collect();
    sort_pairs(&mut out);
    out
}

fn collect_backward(lists: &[Vec<(usize, f64)>], threshold: f64) -> Vec<MinedPair> {
    let mut out: Vec<MinedPair> = collect_forward(lists, threshold)
        .into_iter()
        .map(|p| MinedPair {
            src_idx: p.tgt_idx,
            tgt_idx: p.src_idx,
            score: p.score,
        })
        .collect();
    sort_pairs(&mut out);
    out
}

/// Union of two pair lists; a pair present in both keeps the larger score.
pub fn union_pairs(a: &[MinedPair], b: &[MinedPair]) -> Vec<MinedPair> {
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for p in a.iter().chain(b) {
        merged
            .entry((p.src_idx, p.tgt_idx))
            .and_modify(|s| *s = s.max(p.score))
            .or_insert(p.score);
    }
    let mut out: Vec<MinedPair> = merged
        .into_iter()
        .map(|((src_idx, tgt_idx), score)| MinedPair {
            src_idx,
            tgt_idx,
            score,
        })
        .collect();
    sort_pairs(&mut out);
    out
}

/// For every source row, its best `candidates_per_query` targets by margin
/// score, kept when the score reaches the threshold.
pub fn mine_direction(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MineConfig) -> Result<Vec<MinedPair>> {
    validate(cfg)?;
    let scorer = MarginScorer::new(src, tgt, &cfg.margin)?;
    let cands = scorer.best(cfg.candidates_per_query, None);
    Ok(collect_forward(&cands.forward, cfg.threshold))
}

/// Best sources for every target row, reported as `(src, tgt)` pairs.
pub fn mine_backward(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MineConfig) -> Result<Vec<MinedPair>> {
    let mut pairs: Vec<MinedPair> = mine_direction(tgt, src, cfg)?
        .into_iter()
        .map(|p| MinedPair {
            src_idx: p.tgt_idx,
            tgt_idx: p.src_idx,
            score: p.score,
        })
        .collect();
    sort_pairs(&mut pairs);
    Ok(pairs)
}

pub fn mine_union(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MineConfig) -> Result<Vec<MinedPair>> {
    Ok(mine(src, tgt, &MineConfig {
        direction: Direction::Union,
        ..*cfg
    })?
    .pairs)
}

/// Runs the configured direction. Union scores both directions in a
/// single sweep over the pair space.
pub fn mine(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MineConfig) -> Result<MineOutcome> {
    validate(cfg)?;
    let scorer = MarginScorer::new(src, tgt, &cfg.margin)?;
    let c = cfg.candidates_per_query;
    Ok(match cfg.direction {
        Direction::Forward => {
            let pairs = collect_forward(&scorer.best(c, None).forward, cfg.threshold);
            MineOutcome {
                forward_count: Some(pairs.len()),
                backward_count: None,
                union_count: None,
                pairs,
            }
        }
        Direction::Backward => {
            let cands = scorer.best(1, Some(c));
            let pairs = collect_backward(cands.backward.as_deref().unwrap_or_default(), cfg.threshold);
            MineOutcome {
                forward_count: None,
                backward_count: Some(pairs.len()),
                union_count: None,
                pairs,
            }
        }
        Direction::Union => {
            let cands = scorer.best(c, Some(c));
            let fwd = collect_forward(&cands.forward, cfg.threshold);
            let bwd = collect_backward(cands.backward.as_deref().unwrap_or_default(), cfg.threshold);
            let pairs = union_pairs(&fwd, &bwd);
            MineOutcome {
                forward_count: Some(fwd.len()),
                backward_count: Some(bwd.len()),
                union_count: Some(pairs.len()),
                pairs,
            }
        }
    })
}

/// Writes `score \t src \t tgt` lines, score with four decimals.
pub fn write_pairs<W: Write>(pairs: &[MinedPair], src_text: &[String], tgt_text: &[String], w: &mut W) -> Result<()> {
    for p in pairs {
        let src = src_text.get(p.src_idx).ok_or(Error::IndexOutOfRange {
            index: p.src_idx,
            len: src_text.len(),
        })?;
        let tgt = tgt_text.get(p.tgt_idx).ok_or(Error::IndexOutOfRange {
            index: p.tgt_idx,
            len: tgt_text.len(),
        })?;
        writeln!(w, "{:.4}\t{}\t{}", p.score, src, tgt)?;
    }
    Ok(())
}

pub fn write_pairs_file(
    pairs: &[MinedPair],
    src_text: &[String],
    tgt_text: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    // Validate every index before creating the file.
    for p in pairs {
        if p.src_idx >= src_text.len() {
            return Err(Error::IndexOutOfRange {
                index: p.src_idx,
                len: src_text.len(),
            });
        }
        if p.tgt_idx >= tgt_text.len() {
            return Err(Error::IndexOutOfRange {
                index: p.tgt_idx,
                len: tgt_text.len(),
            });
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_pairs(pairs, src_text, tgt_text, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One parsed line of a mined-pairs TSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLine {
    pub score: f64,
    pub src: String,
    pub tgt: String,
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<PairLine>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.splitn(3, '\t');
        let (Some(score), Some(src), Some(tgt)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: n + 1,
                reason: "expected three tab-separated fields".into(),
            });
        };
        let score = score.parse::<f64>().map_err(|e| Error::Parse {
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(PairLine {
            score,
            src: src.to_string(),
            tgt: tgt.to_string(),
        });
    }
    Ok(out)
}

pub fn read_pairs_file(path: impl AsRef<Path>) -> Result<Vec<PairLine>> {
    read_pairs(BufReader::new(File::open(path)?))
}
