//! Blocked inner-product sweep shared by k-NN and margin scoring.
//!
//! Targets are packed into panels of [`LANES`] rows stored dimension-major,
//! so a group of [`QGROUP`] queries is scored against a whole panel with no
//! horizontal reductions. Every dot product is accumulated in `f64` in
//! plain dimension order, which makes results independent of block sizes,
//! thread counts and the instruction set picked at runtime: the product of
//! two `f32` values is exact in `f64`, so fused and unfused multiply-add
//! round identically.

use std::ops::Range;

use rayon::prelude::*;

use crate::embstore::EmbeddingMatrix;

pub(crate) const LANES: usize = 16;
pub(crate) const QGROUP: usize = 4;
pub(crate) const DEFAULT_BLOCK_ROWS: usize = 256;

type Tile = [[f64; LANES]; QGROUP];
type TileFn = unsafe fn(&[f64], usize, &[f64], &mut Tile);

/// Query side: rows widened to `f64`, padded to a multiple of [`QGROUP`].
pub(crate) struct QueryRows {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl QueryRows {
    pub(crate) fn new(m: &EmbeddingMatrix) -> Self {
        let padded = m.count().div_ceil(QGROUP) * QGROUP;
        let mut data = vec![0.0; padded * m.dim()];
        for (dst, src) in data.iter_mut().zip(m.data()) {
            *dst = f64::from(*src);
        }
        Self {
            dim: m.dim(),
            count: m.count(),
            data,
        }
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }
}

/// Target side: panels of `LANES` rows, `panel[d * LANES + lane]`.
pub(crate) struct PackedTargets {
    dim: usize,
    count: usize,
    panels: Vec<f64>,
}

impl PackedTargets {
    pub(crate) fn new(m: &EmbeddingMatrix) -> Self {
        let dim = m.dim();
        let npanels = m.count().div_ceil(LANES);
        let mut panels = vec![0.0; npanels * LANES * dim];
        for (t, row) in m.rows().enumerate() {
            let base = (t / LANES) * LANES * dim;
            let lane = t % LANES;
            for (d, v) in row.iter().enumerate() {
                panels[base + d * LANES + lane] = f64::from(*v);
            }
        }
        Self {
            dim,
            count: m.count(),
            panels,
        }
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    fn npanels(&self) -> usize {
        self.count.div_ceil(LANES)
    }

    fn panel(&self, p: usize) -> &[f64] {
        let len = LANES * self.dim;
        &self.panels[p * len..(p + 1) * len]
    }
}

#[inline(always)]
fn tile_body<const FMA: bool>(q: &[f64], dim: usize, panel: &[f64], out: &mut Tile) {
    let mut acc: Tile = [[0.0; LANES]; QGROUP];
    for d in 0..dim {
        let t: &[f64; LANES] = panel[d * LANES..(d + 1) * LANES].try_into().unwrap();
        for (r, row) in acc.iter_mut().enumerate() {
            let qv = q[r * dim + d];
            for l in 0..LANES {
                row[l] = if FMA {
                    qv.mul_add(t[l], row[l])
                } else {
                    qv * t[l] + row[l]
                };
            }
        }
    }
    *out = acc;
}

unsafe fn tile_portable(q: &[f64], dim: usize, panel: &[f64], out: &mut Tile) {
    tile_body::<false>(q, dim, panel, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_avx2(q: &[f64], dim: usize, panel: &[f64], out: &mut Tile) {
    tile_body::<true>(q, dim, panel, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn tile_avx512(q: &[f64], dim: usize, panel: &[f64], out: &mut Tile) {
    tile_body::<true>(q, dim, panel, out)
}

fn select_tile_fn() -> TileFn {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("fma") {
            return tile_avx512;
        }
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            return tile_avx2;
        }
    }
    tile_portable
}

/// Runs `visit(query, target, dot)` over every pair in `rows x targets`.
///
/// Pairs are visited panel by panel; within a panel, queries in ascending
/// order and targets in ascending order.
pub(crate) fn scan<F>(queries: &QueryRows, rows: Range<usize>, targets: &PackedTargets, mut visit: F)
where
    F: FnMut(usize, usize, f64),
{
    debug_assert_eq!(queries.dim, targets.dim);
    let dim = queries.dim;
    let tile_fn = select_tile_fn();
    let mut tile: Tile = [[0.0; LANES]; QGROUP];
    let start = rows.start - rows.start % QGROUP;
    for p in 0..targets.npanels() {
        let panel = targets.panel(p);
        let t0 = p * LANES;
        let lanes = LANES.min(targets.count - t0);
        let mut g = start;
        while g < rows.end {
            let q = &queries.data[g * dim..(g + QGROUP) * dim];
            // SAFETY: the selected function only uses features detected at runtime.
            unsafe { tile_fn(q, dim, panel, &mut tile) };
            for (r, scores) in tile.iter().enumerate() {
                let qi = g + r;
                if qi < rows.start || qi >= rows.end {
                    continue;
                }
                for (l, &s) in scores[..lanes].iter().enumerate() {
                    visit(qi, t0 + l, s);
                }
            }
            g += QGROUP;
        }
    }
}

/// Best-`k` accumulator under the order (score descending, index ascending).
#[derive(Debug, Clone)]
pub(crate) struct TopK {
    k: usize,
    // Worst kept score once full, -inf before.
    floor: f64,
    items: Vec<(f64, usize)>,
}

#[inline]
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            floor: f64::NEG_INFINITY,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, score: f64, index: usize) {
        if score < self.floor {
            return;
        }
        self.insert(score, index);
    }

    #[inline(never)]
    fn insert(&mut self, score: f64, index: usize) {
        if self.items.len() == self.k {
            if !better((score, index), self.items[self.k - 1]) {
                return;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .iter()
            .position(|&it| better((score, index), it))
            .unwrap_or(self.items.len());
        self.items.insert(pos, (score, index));
        if self.items.len() == self.k {
            self.floor = self.items[self.k - 1].0;
        }
    }

    pub(crate) fn merge(&mut self, other: &TopK) {
        for &(s, i) in &other.items {
            self.push(s, i);
        }
    }

    pub(crate) fn items(&self) -> &[(f64, usize)] {
        &self.items
    }

    pub(crate) fn into_items(self) -> Vec<(f64, usize)> {
        self.items
    }
}

/// Result of a [`sweep`]: per-query winners and, optionally, per-target
/// winners over the queries.
pub(crate) struct SweepResult {
    pub rows: Vec<TopK>,
    pub cols: Option<Vec<TopK>>,
}

/// Scores every query against every target with `score(q, t, dot)` and
/// keeps the best `row_k` targets per query and, when `col_k` is set, the
/// best `col_k` queries per target. `score` returning `None` skips a pair.
pub(crate) fn sweep<S>(
    queries: &QueryRows,
    targets: &PackedTargets,
    block_rows: usize,
    row_k: usize,
    col_k: Option<usize>,
    score: S,
) -> SweepResult
where
    S: Fn(usize, usize, f64) -> Option<f64> + Sync,
{
    let n = queries.count();
    let m = targets.count();
    let block_rows = (block_rows.max(1)).div_ceil(QGROUP) * QGROUP;
    let nblocks = n.div_ceil(block_rows);

    let (mut blocks, cols) = (0..nblocks)
        .into_par_iter()
        .fold(
            || (Vec::new(), col_k.map(|ck| vec![TopK::new(ck); m])),
            |(mut done, mut cols), b| {
                let start = b * block_rows;
                let end = (start + block_rows).min(n);
                let mut rows = vec![TopK::new(row_k); end - start];
                scan(queries, start..end, targets, |q, t, dot| {
                    if let Some(s) = score(q, t, dot) {
                        rows[q - start].push(s, t);
                        if let Some(cols) = cols.as_mut() {
                            cols[t].push(s, q);
                        }
                    }
                });
                done.push((b, rows));
                (done, cols)
            },
        )
        .reduce(
            || (Vec::new(), col_k.map(|ck| vec![TopK::new(ck); m])),
            |(mut a_done, a_cols), (b_done, b_cols)| {
                a_done.extend(b_done);
                let cols = match (a_cols, b_cols) {
                    (Some(mut a), Some(b)) => {
                        for (x, y) in a.iter_mut().zip(&b) {
                            x.merge(y);
                        }
                        Some(a)
                    }
                    _ => None,
                };
                (a_done, cols)
            },
        );
    blocks.sort_by_key(|(b, _)| *b);
    SweepResult {
        rows: blocks.into_iter().flat_map(|(_, r)| r).collect(),
        cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
        let mut s = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            s += f64::from(*x) * f64::from(*y);
        }
        s
    }

    #[test]
    fn scan_matches_sequential_dot_bitwise() {
        let dim = 7;
        let a: Vec<f32> = (0..9 * dim).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.37).collect();
        let b: Vec<f32> = (0..21 * dim).map(|i| ((i * 13 % 17) as f32 - 8.0) * 0.11).collect();
        let a = EmbeddingMatrix::new(dim, a).unwrap();
        let b = EmbeddingMatrix::new(dim, b).unwrap();
        let q = QueryRows::new(&a);
        let t = PackedTargets::new(&b);
        let mut seen = [false; 9 * 21];
        scan(&q, 0..9, &t, |qi, ti, dot| {
            assert_eq!(dot.to_bits(), naive_dot(a.row(qi), b.row(ti)).to_bits());
            seen[qi * 21 + ti] = true;
        });
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn portable_and_simd_tiles_agree() {
        let dim = 33;
        let q: Vec<f64> = (0..QGROUP * dim).map(|i| f64::from((i as f32 * 0.731).sin())).collect();
        let p: Vec<f64> = (0..LANES * dim).map(|i| f64::from((i as f32 * 1.37).cos())).collect();
        let mut a = [[0.0; LANES]; QGROUP];
        let mut b = [[0.0; LANES]; QGROUP];
        unsafe {
            tile_portable(&q, dim, &p, &mut a);
            select_tile_fn()(&q, dim, &p, &mut b);
        }
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn topk_orders_by_score_then_index() {
        let mut t = TopK::new(3);
        for (s, i) in [(0.5, 4), (0.9, 7), (0.5, 2), (0.1, 0), (0.9, 3), (0.5, 1)] {
            t.push(s, i);
        }
        assert_eq!(t.items(), &[(0.9, 3), (0.9, 7), (0.5, 1)]);
    }
}
