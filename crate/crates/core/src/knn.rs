//! Exact top-k cosine retrieval.

use crate::embstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernel::{self, PackedTargets, QueryRows, TopK};

/// Per-query neighbors, best first. Ties are broken by smaller target index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    indices: Vec<usize>,
    scores: Vec<f64>,
}

impl NeighborList {
    pub(crate) fn from_topk(k: usize, rows: Vec<TopK>) -> Self {
        let mut indices = Vec::with_capacity(rows.len() * k);
        let mut scores = Vec::with_capacity(rows.len() * k);
        for row in rows {
            debug_assert_eq!(row.items().len(), k);
            for (s, i) in row.into_items() {
                scores.push(s);
                indices.push(i);
            }
        }
        Self { k, indices, scores }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of query rows.
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.indices.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, row: usize) -> &[usize] {
        &self.indices[row * self.k..(row + 1) * self.k]
    }

    pub fn scores(&self, row: usize) -> &[f64] {
        &self.scores[row * self.k..(row + 1) * self.k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Query rows per work unit.
    pub block_rows: usize,
    /// Skip the target whose index equals the query index. Only meaningful
    /// for row-aligned (N-way parallel) matrices.
    pub exclude_same_index: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            block_rows: kernel::DEFAULT_BLOCK_ROWS,
            exclude_same_index: false,
        }
    }
}

/// Cosine similarity of two vectors, accumulated in double precision.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Reciprocal row norms, or `None` when the matrix is flagged normalized
/// and raw inner products already are cosines.
fn inverse_norms(m: &EmbeddingMatrix) -> Result<Option<Vec<f64>>> {
    if m.is_normalized() {
        return Ok(None);
    }
    m.rows()
        .map(|row| {
            let n = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>();
            if n == 0.0 {
                Err(Error::ZeroNorm)
            } else {
                Ok(1.0 / n.sqrt())
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if k > available {
        return Err(Error::KTooLarge { k, available });
    }
    Ok(())
}

/// Exact `k` nearest targets by cosine for every query row.
pub fn topk(queries: &EmbeddingMatrix, targets: &EmbeddingMatrix, k: usize) -> Result<NeighborList> {
    topk_with(queries, targets, k, &SearchOptions::default())
}

pub fn topk_with(
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<NeighborList> {
    let (rows, _) = run(queries, targets, k, false, opts)?;
    Ok(rows)
}

/// `topk(a, b, k)` and `topk(b, a, k)` computed in a single sweep.
pub fn topk_bidirectional(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<(NeighborList, NeighborList)> {
    let (rows, cols) = run(a, b, k, true, opts)?;
    Ok((rows, cols.expect("column side requested")))
}

fn run(
    queries: &EmbeddingMatrix,
    targets: &EmbeddingMatrix,
    k: usize,
    both: bool,
    opts: &SearchOptions,
) -> Result<(NeighborList, Option<NeighborList>)> {
    queries.check_same_dim(targets)?;
    let excluded = usize::from(opts.exclude_same_index);
    if queries.count() > 0 {
        check_k(k, targets.count().saturating_sub(excluded))?;
    }
    if both && targets.count() > 0 {
        check_k(k, queries.count().saturating_sub(excluded))?;
    }
    let qn = inverse_norms(queries)?;
    let tn = inverse_norms(targets)?;
    let q = QueryRows::new(queries);
    let t = PackedTargets::new(targets);
    let exclude = opts.exclude_same_index;
    let res = kernel::sweep(&q, &t, opts.block_rows, k, both.then_some(k), |qi, ti, dot| {
        if exclude && qi == ti {
            return None;
        }
        let cos = match (&qn, &tn) {
            (Some(a), Some(b)) => dot * a[qi] * b[ti],
            (Some(a), None) => dot * a[qi],
            (None, Some(b)) => dot * b[ti],
            (None, None) => dot,
        };
        Some(cos)
    });
    Ok((
        NeighborList::from_topk(k, res.rows),
        res.cols.map(|c| NeighborList::from_topk(k, c)),
    ))
}
