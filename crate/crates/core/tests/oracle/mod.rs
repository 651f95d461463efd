//! Brute-force reference implementations for margin scoring and mining.
//!
//! Everything here is the plain O(n*m) definition over a dense score
//! matrix. Rows are normalized the same way the library stores them (f64
//! norm, f32 result) and cosines are accumulated in f64, so agreement is
//! expected to the last bit.

#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Margin {
    Absolute,
    Ratio,
    Distance,
}

pub fn normalize(rows: &[Vec<f32>]) -> Vec<Vec<f32>> {
    rows.iter()
        .map(|r| {
            let n = r.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            r.iter().map(|&v| (f64::from(v) / n) as f32).collect()
        })
        .collect()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += f64::from(a[i]) * f64::from(b[i]);
    }
    s
}

pub fn cosines(a: &[Vec<f32>], b: &[Vec<f32>]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| dot(x, y)).collect()).collect()
}

/// Cosines of raw rows, `dot / (|a| |b|)`.
pub fn raw_cosines(a: &[Vec<f32>], b: &[Vec<f32>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| b.iter().map(|y| dot(x, y) / (dot(x, x).sqrt() * dot(y, y).sqrt())).collect())
        .collect()
}

/// Indices of the `k` largest entries, ties to the smaller index.
pub fn top(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if m.is_empty() {
        return Vec::new();
    }
    (0..m[0].len()).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

/// `sum of the k best cosines / 2k` for every row.
pub fn half_penalties(cos: &[Vec<f64>], k: usize) -> Vec<f64> {
    cos.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in top(row, k) {
                s += row[j];
            }
            s / (2 * k) as f64
        })
        .collect()
}

/// Dense margin score matrix of normalized inputs.
pub fn margin_matrix(a: &[Vec<f32>], b: &[Vec<f32>], k: usize, margin: Margin) -> Vec<Vec<f64>> {
    let cos = cosines(a, b);
    let ha = half_penalties(&cos, k);
    let hb = half_penalties(&transpose(&cos), k);
    cos.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &c)| {
                    let pen = ha[i] + hb[j];
                    match margin {
                        Margin::Absolute => c,
                        Margin::Ratio => c / pen,
                        Margin::Distance => c - pen,
                    }
                })
                .collect()
        })
        .collect()
}

/// Best `c` targets per source row above `threshold`, as `(src, tgt) -> score`.
pub fn mine_rows(scores: &[Vec<f64>], c: usize, threshold: f64) -> BTreeMap<(usize, usize), f64> {
    let mut out = BTreeMap::new();
    for (i, row) in scores.iter().enumerate() {
        for j in top(row, c) {
            if row[j] >= threshold {
                out.insert((i, j), row[j]);
            }
        }
    }
    out
}

pub fn mine_cols(scores: &[Vec<f64>], c: usize, threshold: f64) -> BTreeMap<(usize, usize), f64> {
    mine_rows(&transpose(scores), c, threshold)
        .into_iter()
        .map(|((j, i), s)| ((i, j), s))
        .collect()
}

pub fn mine_union(scores: &[Vec<f64>], c: usize, threshold: f64) -> BTreeMap<(usize, usize), f64> {
    let mut out = mine_rows(scores, c, threshold);
    for (k, v) in mine_cols(scores, c, threshold) {
        out.entry(k).or_insert(v);
    }
    out
}
