//! Margin-based scoring of candidate sentence pairs and the xsim error rate.
//!
//! The score of a pair `(x, y)` is
//!
//! ```text
//! margin( cos(x, y),  sum_{z in NN_k(x)} cos(x, z) / 2k  +  sum_{z in NN_k(y)} cos(y, z) / 2k )
//! ```
//!
//! where `NN_k(x)` is taken over the full target matrix and `NN_k(y)` over
//! the full source matrix. Both neighbor sets come out of one fused k-NN
//! sweep; candidate scoring is a second sweep that never holds more than a
//! block of scores at a time.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernel::{self, PackedTargets, QueryRows};
use crate::knn::{self, SearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginFn {
    /// `margin(a, b) = a`
    Absolute,
    /// `margin(a, b) = a / b`
    Ratio,
    /// `margin(a, b) = a - b`
    #[default]
    Distance,
}

impl MarginFn {
    pub const ALL: [MarginFn; 3] = [MarginFn::Absolute, MarginFn::Ratio, MarginFn::Distance];

    pub fn name(self) -> &'static str {
        match self {
            MarginFn::Absolute => "absolute",
            MarginFn::Ratio => "ratio",
            MarginFn::Distance => "distance",
        }
    }
}

impl fmt::Display for MarginFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarginFn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" => Ok(MarginFn::Absolute),
            "ratio" => Ok(MarginFn::Ratio),
            "distance" => Ok(MarginFn::Distance),
            other => Err(format!("unknown margin function {other:?} (expected absolute, ratio or distance)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub k: usize,
    #[serde(rename = "margin")]
    pub function: MarginFn,
    /// Neighbor sets range over the whole opposite matrix, including the
    /// row-aligned candidate. When false the aligned index is left out.
    pub include_self: bool,
    /// L2-normalize both matrices on entry. When false, inner products are
    /// used as cosines as-is.
    pub normalize: bool,
    #[serde(skip, default = "default_block_rows")]
    pub block_rows: usize,
}

fn default_block_rows() -> usize {
    kernel::DEFAULT_BLOCK_ROWS
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self {
            k: 4,
            function: MarginFn::Distance,
            include_self: true,
            normalize: true,
            block_rows: kernel::DEFAULT_BLOCK_ROWS,
        }
    }
}

impl MarginConfig {
    pub fn with_function(function: MarginFn) -> Self {
        Self {
            function,
            ..Self::default()
        }
    }
}

pub fn apply_margin(a: f64, b: f64, function: MarginFn) -> Result<f64> {
    match function {
        MarginFn::Absolute => Ok(a),
        MarginFn::Ratio if b == 0.0 => Err(Error::RatioZeroDenominator),
        MarginFn::Ratio => Ok(a / b),
        MarginFn::Distance => Ok(a - b),
    }
}

/// Average neighbor similarity of one side, already divided by `2k`.
pub fn half_penalty(scores: &[f64], k: usize) -> f64 {
    scores.iter().sum::<f64>() / (2 * k) as f64
}

/// The penalty term `b` for a pair, from the neighbor cosines of each side.
pub fn neighbor_penalty(x_scores: &[f64], y_scores: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if x_scores.len() != k || y_scores.len() != k {
        return Err(Error::ArityMismatch {
            k,
            x: x_scores.len(),
            y: y_scores.len(),
        });
    }
    Ok(half_penalty(x_scores, k) + half_penalty(y_scores, k))
}

/// Sequential double-precision inner product; bit-identical to the sweep.
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        s += f64::from(x) * f64::from(y);
    }
    s
}

/// Margin scorer over a fixed source/target pair of matrices.
pub struct MarginScorer {
    cfg: MarginConfig,
    src: EmbeddingMatrix,
    tgt: EmbeddingMatrix,
    src_half: Vec<f64>,
    tgt_half: Vec<f64>,
}

impl MarginScorer {
    pub fn new(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MarginConfig) -> Result<Self> {
        src.check_same_dim(tgt)?;
        if cfg.k == 0 {
            return Err(Error::ZeroK);
        }
        let (src, tgt) = if cfg.normalize {
            (src.ensure_normalized()?, tgt.ensure_normalized()?)
        } else {
            // Raw inner products stand in for cosines.
            (src.clone().assume_normalized(), tgt.clone().assume_normalized())
        };
        let excluded = usize::from(!cfg.include_self);
        for available in [src.count(), tgt.count()] {
            if cfg.k + excluded > available {
                return Err(Error::KTooLarge {
                    k: cfg.k,
                    available: available.saturating_sub(excluded),
                });
            }
        }

        let (src_half, tgt_half) = if cfg.function == MarginFn::Absolute {
            (vec![0.0; src.count()], vec![0.0; tgt.count()])
        } else {
            let opts = SearchOptions {
                block_rows: cfg.block_rows,
                exclude_same_index: !cfg.include_self,
            };
            let (fwd, bwd) = knn::topk_bidirectional(&src, &tgt, cfg.k, &opts)?;
            (
                (0..fwd.len()).map(|i| half_penalty(fwd.scores(i), cfg.k)).collect::<Vec<_>>(),
                (0..bwd.len()).map(|j| half_penalty(bwd.scores(j), cfg.k)).collect::<Vec<_>>(),
            )
        };

        if cfg.function == MarginFn::Ratio {
            // b = 0 exactly when some source half equals a negated target half.
            let negated: HashSet<u64> = tgt_half.iter().map(|&h| (-h + 0.0).to_bits()).collect();
            if src_half.iter().any(|&h| negated.contains(&(h + 0.0).to_bits())) {
                return Err(Error::RatioZeroDenominator);
            }
        }

        Ok(Self {
            cfg: *cfg,
            src,
            tgt,
            src_half,
            tgt_half,
        })
    }

    pub fn config(&self) -> &MarginConfig {
        &self.cfg
    }

    pub fn source_count(&self) -> usize {
        self.src.count()
    }

    pub fn target_count(&self) -> usize {
        self.tgt.count()
    }

    /// `sum cos(x_i, z) / 2k` over `NN_k(x_i)`.
    pub fn source_half_penalties(&self) -> &[f64] {
        &self.src_half
    }

    pub fn target_half_penalties(&self) -> &[f64] {
        &self.tgt_half
    }

    #[inline]
    fn combine(&self, i: usize, j: usize, cos: f64) -> f64 {
        let b = self.src_half[i] + self.tgt_half[j];
        match self.cfg.function {
            MarginFn::Absolute => cos,
            MarginFn::Ratio => cos / b,
            MarginFn::Distance => cos - b,
        }
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        dot(self.src.row(i), self.tgt.row(j))
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.combine(i, j, self.cosine(i, j))
    }

    /// Dense `n x m` score matrix, row-major. Only for small inputs.
    pub fn score_matrix(&self) -> Vec<f64> {
        let m = self.tgt.count();
        let mut out = vec![0.0; self.src.count() * m];
        let q = QueryRows::new(&self.src);
        let t = PackedTargets::new(&self.tgt);
        kernel::scan(&q, 0..self.src.count(), &t, |i, j, d| {
            out[i * m + j] = self.combine(i, j, d);
        });
        out
    }

    /// Best `per_source` targets for every source row and, when requested,
    /// best `per_target` sources for every target row. Lists are ordered by
    /// descending score, ties by ascending index.
    pub fn best(&self, per_source: usize, per_target: Option<usize>) -> Candidates {
        let q = QueryRows::new(&self.src);
        let t = PackedTargets::new(&self.tgt);
        let per_source = per_source.min(self.tgt.count()).max(1);
        let per_target = per_target.map(|c| c.min(self.src.count()).max(1));
        let res = kernel::sweep(&q, &t, self.cfg.block_rows, per_source, per_target, |i, j, d| {
            Some(self.combine(i, j, d))
        });
        let flip = |v: Vec<(f64, usize)>| v.into_iter().map(|(s, i)| (i, s)).collect::<Vec<_>>();
        Candidates {
            forward: res.rows.into_iter().map(|r| flip(r.into_items())).collect(),
            backward: res
                .cols
                .map(|c| c.into_iter().map(|r| flip(r.into_items())).collect()),
        }
    }

    /// Per source row, the target with the highest margin score.
    pub fn argmax(&self) -> Vec<(usize, f64)> {
        self.best(1, None).forward.into_iter().map(|r| r[0]).collect()
    }
}

/// Output of [`MarginScorer::best`]: `(index, score)` lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub forward: Vec<Vec<(usize, f64)>>,
    pub backward: Option<Vec<Vec<(usize, f64)>>>,
}

pub fn score_matrix(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MarginConfig) -> Result<Vec<f64>> {
    Ok(MarginScorer::new(src, tgt, cfg)?.score_matrix())
}

pub fn margin_argmax(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MarginConfig) -> Result<Vec<(usize, f64)>> {
    Ok(MarginScorer::new(src, tgt, cfg)?.argmax())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XsimError {
    pub src: usize,
    pub tgt: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XsimReport {
    /// Percentage of misaligned rows.
    pub error_rate: f64,
    pub n: usize,
    pub k: usize,
    pub margin: MarginFn,
    pub errors: Vec<XsimError>,
}

impl XsimReport {
    pub fn summary(&self) -> String {
        format!(
            "xsim error rate: {:.2}% ({} / {} errors, k={}, margin={})",
            self.error_rate,
            self.errors.len(),
            self.n,
            self.k,
            self.margin
        )
    }
}

/// Similarity-search error rate over row-aligned `src`/`tgt` matrices.
pub fn xsim_error_rate(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, cfg: &MarginConfig) -> Result<XsimReport> {
    if src.count() != tgt.count() {
        return Err(Error::CountMismatch {
            src: src.count(),
            tgt: tgt.count(),
        });
    }
    let n = src.count();
    let errors: Vec<XsimError> = if n == 0 {
        Vec::new()
    } else {
        MarginScorer::new(src, tgt, cfg)?
            .argmax()
            .into_iter()
            .enumerate()
            .filter(|(i, (j, _))| i != j)
            .map(|(i, (j, score))| XsimError { src: i, tgt: j, score })
            .collect()
    };
    let error_rate = if n == 0 {
        0.0
    } else {
        100.0 * errors.len() as f64 / n as f64
    };
    Ok(XsimReport {
        error_rate,
        n,
        k: cfg.k,
        margin: cfg.function,
        errors,
    })
}
