//! Pre-norm transformer encoder with hand-written backward pass.
//!
//! All parameters live in one flat `f64` buffer described by a
//! [`ParamLayout`]; gradients use the same layout. This keeps the
//! optimizer, serialization and finite-difference checks trivial.
//!
//! Sequences in a batch are packed back to back (no padding): dense layers
//! run on the packed `tokens x width` matrix and attention runs per
//! sequence. The masked-LM head shares its output matrix with the token
//! embedding.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DistillError, Result};
use crate::vocab::{self, PAD};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            width: 64,
            heads: 2,
            ffn_mult: 4,
            vocab_size: 1000,
            max_len: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DistillError::InvalidConfig(m.to_string()));
        if self.layers == 0 || self.width == 0 || self.heads == 0 || self.ffn_mult == 0 || self.max_len == 0 {
            return bad("layers, width, heads, ffn_mult and max_len must be positive");
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad("width must be divisible by heads");
        }
        if self.vocab_size < vocab::NUM_SPECIAL {
            return bad("vocab_size must cover the special tokens");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    pub fn ffn_width(&self) -> usize {
        self.width * self.ffn_mult
    }
}

#[derive(Debug, Clone)]
pub struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

/// Offsets of every parameter tensor inside the flat buffer.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub mlm_w: Range<usize>,
    pub mlm_b: Range<usize>,
    pub mlm_ln_g: Range<usize>,
    pub mlm_ln_b: Range<usize>,
    pub mlm_bias: Range<usize>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl ParamLayout {
    pub fn new(cfg: &EncoderConfig) -> Self {
        let (h, f, v) = (cfg.width, cfg.ffn_width(), cfg.vocab_size);
        let mut c = Cursor(0);
        let tok_emb = c.take(v * h);
        let pos_emb = c.take(cfg.max_len * h);
        let layers = (0..cfg.layers)
            .map(|_| LayerLayout {
                ln1_g: c.take(h),
                ln1_b: c.take(h),
                wq: c.take(h * h),
                bq: c.take(h),
                wk: c.take(h * h),
                bk: c.take(h),
                wv: c.take(h * h),
                bv: c.take(h),
                wo: c.take(h * h),
                bo: c.take(h),
                ln2_g: c.take(h),
                ln2_b: c.take(h),
                w1: c.take(h * f),
                b1: c.take(f),
                w2: c.take(f * h),
                b2: c.take(h),
            })
            .collect();
        let lnf_g = c.take(h);
        let lnf_b = c.take(h);
        let mlm_w = c.take(h * h);
        let mlm_b = c.take(h);
        let mlm_ln_g = c.take(h);
        let mlm_ln_b = c.take(h);
        let mlm_bias = c.take(v);
        Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            mlm_w,
            mlm_b,
            mlm_ln_g,
            mlm_ln_b,
            mlm_bias,
            total: c.0,
        }
    }

    /// Named tensors in storage order, for diagnostics and gradient checks.
    pub fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![("tok_emb".to_string(), self.tok_emb.clone()), ("pos_emb".to_string(), self.pos_emb.clone())];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, r) in [
                ("ln1_g", &l.ln1_g),
                ("ln1_b", &l.ln1_b),
                ("wq", &l.wq),
                ("bq", &l.bq),
                ("wk", &l.wk),
                ("bk", &l.bk),
                ("wv", &l.wv),
                ("bv", &l.bv),
                ("wo", &l.wo),
                ("bo", &l.bo),
                ("ln2_g", &l.ln2_g),
                ("ln2_b", &l.ln2_b),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
            ] {
                out.push((format!("layer{i}.{name}"), r.clone()));
            }
        }
        out.push(("lnf_g".into(), self.lnf_g.clone()));
        out.push(("lnf_b".into(), self.lnf_b.clone()));
        out.push(("mlm_w".into(), self.mlm_w.clone()));
        out.push(("mlm_b".into(), self.mlm_b.clone()));
        out.push(("mlm_ln_g".into(), self.mlm_ln_g.clone()));
        out.push(("mlm_ln_b".into(), self.mlm_ln_b.clone()));
        out.push(("mlm_bias".into(), self.mlm_bias.clone()));
        out
    }
}

fn mat<'a>(p: &'a [f64], r: &Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &p[r.clone()]).expect("layout shape")
}

fn vec1<'a>(p: &'a [f64], r: &Range<usize>) -> ArrayView1<'a, f64> {
    ArrayView1::from(&p[r.clone()])
}

fn mat_mut<'a>(g: &'a mut [f64], r: &Range<usize>, rows: usize, cols: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut g[r.clone()]).expect("layout shape")
}

fn vec1_mut<'a>(g: &'a mut [f64], r: &Range<usize>) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut g[r.clone()])
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.outer_iter_mut().zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &LnCache, g: ArrayView1<f64>, grads: &mut [f64], gr: &Range<usize>, br: &Range<usize>) -> Array2<f64> {
    let n = dy.ncols() as f64;
    vec1_mut(grads, gr).scaled_add(1.0, &(dy * &cache.xhat).sum_axis(Axis(0)));
    vec1_mut(grads, br).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    let dxhat = dy * &g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, dxh), xh), &rs) in dx.outer_iter_mut().zip(dxhat.outer_iter()).zip(cache.xhat.outer_iter()).zip(cache.rstd.iter()) {
        let mean_d = dxh.sum() / n;
        let mean_dx = dxh.dot(&xh) / n;
        Zip::from(&mut out).and(&dxh).and(&xh).for_each(|o, &d, &x| {
            *o = rs * (d - mean_d - x * mean_dx);
        });
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn linear(x: &Array2<f64>, p: &[f64], w: &Range<usize>, b: &Range<usize>, din: usize, dout: usize) -> Array2<f64> {
    x.dot(&mat(p, w, din, dout)) + vec1(p, b)
}

#[allow(clippy::too_many_arguments)]
fn linear_backward(dy: &Array2<f64>, x: &Array2<f64>, p: &[f64], grads: &mut [f64], w: &Range<usize>, b: &Range<usize>, din: usize, dout: usize) -> Array2<f64> {
    mat_mut(grads, w, din, dout).scaled_add(1.0, &x.t().dot(dy));
    vec1_mut(grads, b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    dy.dot(&mat(p, w, din, dout).t())
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    // One softmax matrix per (sequence, head).
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache {
    tokens: Vec<u32>,
    positions: Vec<usize>,
    spans: Vec<Range<usize>>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    /// Final token states, `tokens x width`.
    pub output: Array2<f64>,
}

impl ForwardCache {
    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }
}

/// Stateless encoder: parameters are passed in on every call.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    layout: ParamLayout,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            layout: ParamLayout::new(&cfg),
            cfg,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Gaussian initialization; LayerNorm gains start at one.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let h = self.cfg.width as f64;
        let f = self.cfg.ffn_width() as f64;
        let depth_scale = 1.0 / (2.0 * self.cfg.layers as f64).sqrt();
        let mut p = vec![0.0; self.layout.total];
        let mut fill = |p: &mut Vec<f64>, r: &Range<usize>, std: f64| {
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in &mut p[r.clone()] {
                *v = normal.sample(rng);
            }
        };
        fill(&mut p, &self.layout.tok_emb, 1.0 / h.sqrt());
        fill(&mut p, &self.layout.pos_emb, 0.1 / h.sqrt());
        for l in &self.layout.layers {
            for w in [&l.wq, &l.wk, &l.wv] {
                fill(&mut p, w, 1.0 / h.sqrt());
            }
            fill(&mut p, &l.wo, depth_scale / h.sqrt());
            fill(&mut p, &l.w1, 1.0 / h.sqrt());
            fill(&mut p, &l.w2, depth_scale / f.sqrt());
            p[l.ln1_g.clone()].fill(1.0);
            p[l.ln2_g.clone()].fill(1.0);
        }
        p[self.layout.lnf_g.clone()].fill(1.0);
        fill(&mut p, &self.layout.mlm_w, 1.0 / h.sqrt());
        p[self.layout.mlm_ln_g.clone()].fill(1.0);
        p
    }

    /// Drops padding and checks ids and length.
    pub fn prepare(&self, tokens: &[u32]) -> Result<Vec<u32>> {
        let ids: Vec<u32> = tokens.iter().copied().filter(|&t| t != PAD).collect();
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(DistillError::TokenOutOfRange {
                id: bad,
                vocab_size: self.cfg.vocab_size,
            });
        }
        if ids.is_empty() {
            return Err(DistillError::EmptySequence);
        }
        if ids.len() > self.cfg.max_len {
            return Err(DistillError::TooLong {
                len: ids.len(),
                max_len: self.cfg.max_len,
            });
        }
        Ok(ids)
    }

    /// Runs already-prepared sequences (see [`Encoder::prepare`]).
    pub fn forward(&self, p: &[f64], seqs: &[&[u32]]) -> ForwardCache {
        let (h, f) = (self.cfg.width, self.cfg.ffn_width());
        let (nh, dh) = (self.cfg.heads, self.cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let mut tokens = Vec::new();
        let mut positions = Vec::new();
        let mut spans = Vec::with_capacity(seqs.len());
        for seq in seqs {
            let start = tokens.len();
            tokens.extend_from_slice(seq);
            positions.extend(0..seq.len());
            spans.push(start..tokens.len());
        }
        let t = tokens.len();
        let tok_emb = mat(p, &self.layout.tok_emb, self.cfg.vocab_size, h);
        let pos_emb = mat(p, &self.layout.pos_emb, self.cfg.max_len, h);
        let mut x = Array2::zeros((t, h));
        for (i, mut row) in x.outer_iter_mut().enumerate() {
            row.assign(&tok_emb.row(tokens[i] as usize));
            row += &pos_emb.row(positions[i]);
        }

        let mut layers = Vec::with_capacity(self.cfg.layers);
        for l in &self.layout.layers {
            let (h1, ln1) = layer_norm(&x, vec1(p, &l.ln1_g), vec1(p, &l.ln1_b));
            let q = linear(&h1, p, &l.wq, &l.bq, h, h);
            let k = linear(&h1, p, &l.wk, &l.bk, h, h);
            let v = linear(&h1, p, &l.wv, &l.bv, h, h);
            let mut ctx = Array2::zeros((t, h));
            let mut probs = Vec::with_capacity(spans.len() * nh);
            for span in &spans {
                for head in 0..nh {
                    let cols = head * dh..(head + 1) * dh;
                    let qs = q.slice(s![span.clone(), cols.clone()]);
                    let ks = k.slice(s![span.clone(), cols.clone()]);
                    let vs = v.slice(s![span.clone(), cols.clone()]);
                    let mut sc = qs.dot(&ks.t()) * scale;
                    for mut row in sc.outer_iter_mut() {
                        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        row.mapv_inplace(|v| (v - m).exp());
                        let z = row.sum();
                        row.mapv_inplace(|v| v / z);
                    }
                    ctx.slice_mut(s![span.clone(), cols]).assign(&sc.dot(&vs));
                    probs.push(sc);
                }
            }
            let attn = linear(&ctx, p, &l.wo, &l.bo, h, h);
            let x_mid = &x + &attn;
            let (h2, ln2) = layer_norm(&x_mid, vec1(p, &l.ln2_g), vec1(p, &l.ln2_b));
            let pre_act = linear(&h2, p, &l.w1, &l.b1, h, f);
            let act = pre_act.mapv(gelu);
            let ffn = linear(&act, p, &l.w2, &l.b2, f, h);
            let x_out = &x_mid + &ffn;
            layers.push(LayerCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                h2,
                pre_act,
                act,
            });
            x = x_out;
        }
        let (output, lnf) = layer_norm(&x, vec1(p, &self.layout.lnf_g), vec1(p, &self.layout.lnf_b));
        ForwardCache {
            tokens,
            positions,
            spans,
            layers,
            lnf,
            output,
        }
    }

    /// Accumulates parameter gradients for upstream gradient `d_out` on the
    /// final token states.
    pub fn backward(&self, p: &[f64], cache: &ForwardCache, d_out: &Array2<f64>, grads: &mut [f64]) {
        let (h, f) = (self.cfg.width, self.cfg.ffn_width());
        let (nh, dh) = (self.cfg.heads, self.cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dx = layer_norm_backward(d_out, &cache.lnf, vec1(p, &self.layout.lnf_g), grads, &self.layout.lnf_g, &self.layout.lnf_b);

        for (l, c) in self.layout.layers.iter().zip(&cache.layers).rev() {
            // FFN sub-block: x_out = x_mid + W2 gelu(W1 LN2(x_mid))
            let d_act = linear_backward(&dx, &c.act, p, grads, &l.w2, &l.b2, f, h);
            let d_pre = &d_act * &c.pre_act.mapv(gelu_grad);
            let d_h2 = linear_backward(&d_pre, &c.h2, p, grads, &l.w1, &l.b1, h, f);
            let mut d_mid = layer_norm_backward(&d_h2, &c.ln2, vec1(p, &l.ln2_g), grads, &l.ln2_g, &l.ln2_b);
            d_mid += &dx;

            // Attention sub-block: x_mid = x_in + Wo attn(LN1(x_in))
            let d_ctx = linear_backward(&d_mid, &c.ctx, p, grads, &l.wo, &l.bo, h, h);
            let mut dq = Array2::zeros(c.q.raw_dim());
            let mut dk = Array2::zeros(c.k.raw_dim());
            let mut dv = Array2::zeros(c.v.raw_dim());
            let mut probs = c.probs.iter();
            for span in &cache.spans {
                for head in 0..nh {
                    let cols = head * dh..(head + 1) * dh;
                    let pm = probs.next().expect("one softmax per span and head");
                    let dc = d_ctx.slice(s![span.clone(), cols.clone()]);
                    let qs = c.q.slice(s![span.clone(), cols.clone()]);
                    let ks = c.k.slice(s![span.clone(), cols.clone()]);
                    let vs = c.v.slice(s![span.clone(), cols.clone()]);
                    dv.slice_mut(s![span.clone(), cols.clone()]).assign(&pm.t().dot(&dc));
                    let dp = dc.dot(&vs.t());
                    let mut ds = &dp * pm;
                    for (mut row, prow) in ds.outer_iter_mut().zip(pm.outer_iter()) {
                        let dot = row.sum();
                        Zip::from(&mut row).and(&prow).for_each(|d, &pr| *d -= pr * dot);
                    }
                    ds *= scale;
                    dq.slice_mut(s![span.clone(), cols.clone()]).assign(&ds.dot(&ks));
                    dk.slice_mut(s![span.clone(), cols]).assign(&ds.t().dot(&qs));
                }
            }
            let mut d_h1 = linear_backward(&dq, &c.h1, p, grads, &l.wq, &l.bq, h, h);
            d_h1 += &linear_backward(&dk, &c.h1, p, grads, &l.wk, &l.bk, h, h);
            d_h1 += &linear_backward(&dv, &c.h1, p, grads, &l.wv, &l.bv, h, h);
            let mut d_in = layer_norm_backward(&d_h1, &c.ln1, vec1(p, &l.ln1_g), grads, &l.ln1_g, &l.ln1_b);
            d_in += &d_mid;
            dx = d_in;
        }

        let mut g_tok = mat_mut(grads, &self.layout.tok_emb, self.cfg.vocab_size, h);
        for (i, row) in dx.outer_iter().enumerate() {
            let mut dst = g_tok.row_mut(cache.tokens[i] as usize);
            dst += &row;
        }
        let mut g_pos = mat_mut(grads, &self.layout.pos_emb, self.cfg.max_len, h);
        for (i, row) in dx.outer_iter().enumerate() {
            let mut dst = g_pos.row_mut(cache.positions[i]);
            dst += &row;
        }
    }

    /// Masked-LM head: `LN(gelu(states W + b)) E^T + bias`, with `E` the
    /// token embedding matrix.
    pub fn mlm_forward(&self, p: &[f64], states: &Array2<f64>) -> (Array2<f64>, MlmCache) {
        let (v, h) = (self.cfg.vocab_size, self.cfg.width);
        let l = &self.layout;
        let pre = linear(states, p, &l.mlm_w, &l.mlm_b, h, h);
        let act = pre.mapv(gelu);
        let (out, ln) = layer_norm(&act, vec1(p, &l.mlm_ln_g), vec1(p, &l.mlm_ln_b));
        let logits = out.dot(&mat(p, &l.tok_emb, v, h).t()) + vec1(p, &l.mlm_bias);
        (logits, MlmCache { pre, ln, out })
    }

    /// Backward through [`Encoder::mlm_forward`]; returns the gradient with
    /// respect to `states`.
    pub fn mlm_backward(&self, p: &[f64], states: &Array2<f64>, cache: &MlmCache, d_logits: &Array2<f64>, grads: &mut [f64]) -> Array2<f64> {
        let (v, h) = (self.cfg.vocab_size, self.cfg.width);
        let l = &self.layout;
        mat_mut(grads, &l.tok_emb, v, h).scaled_add(1.0, &d_logits.t().dot(&cache.out));
        vec1_mut(grads, &l.mlm_bias).scaled_add(1.0, &d_logits.sum_axis(Axis(0)));
        let d_out = d_logits.dot(&mat(p, &l.tok_emb, v, h));
        let d_act = layer_norm_backward(&d_out, &cache.ln, vec1(p, &l.mlm_ln_g), grads, &l.mlm_ln_g, &l.mlm_ln_b);
        let d_pre = &d_act * &cache.pre.mapv(gelu_grad);
        linear_backward(&d_pre, states, p, grads, &l.mlm_w, &l.mlm_b, h, h)
    }
}

/// Activations of the masked-LM head.
pub struct MlmCache {
    pre: Array2<f64>,
    ln: LnCache,
    out: Array2<f64>,
}

/// Elementwise max over each span of rows. Returns the pooled matrix and,
/// per output cell, the winning packed row.
pub fn max_pool(states: &Array2<f64>, spans: &[Range<usize>]) -> (Array2<f64>, Vec<usize>) {
    let h = states.ncols();
    let mut pooled = Array2::from_elem((spans.len(), h), f64::NEG_INFINITY);
    let mut winners = vec![0usize; spans.len() * h];
    for (b, span) in spans.iter().enumerate() {
        for r in span.clone() {
            for j in 0..h {
                let v = states[[r, j]];
                if v > pooled[[b, j]] {
                    pooled[[b, j]] = v;
                    winners[b * h + j] = r;
                }
            }
        }
    }
    (pooled, winners)
}

pub fn max_pool_backward(d_pooled: &Array2<f64>, winners: &[usize], tokens: usize) -> Array2<f64> {
    let h = d_pooled.ncols();
    let mut d = Array2::zeros((tokens, h));
    for ((b, j), &g) in d_pooled.indexed_iter() {
        d[[winners[b * h + j], j]] += g;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (Encoder, Vec<f64>) {
        let cfg = EncoderConfig {
            layers: 2,
            width: 8,
            heads: 2,
            ffn_mult: 2,
            vocab_size: 12,
            max_len: 6,
        };
        let enc = Encoder::new(cfg).unwrap();
        let p = enc.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        (enc, p)
    }

    #[test]
    fn layout_is_contiguous() {
        let (enc, p) = tiny();
        let tensors = enc.layout().tensors();
        let mut next = 0;
        for (_, r) in &tensors {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, p.len());
    }

    #[test]
    fn packing_matches_separate_runs() {
        let (enc, p) = tiny();
        let a: &[u32] = &[5, 6, 7];
        let b: &[u32] = &[8, 9];
        let both = enc.forward(&p, &[a, b]);
        let ra = enc.forward(&p, &[a]);
        let rb = enc.forward(&p, &[b]);
        for (x, y) in both.output.slice(s![0..3, ..]).iter().zip(ra.output.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in both.output.slice(s![3..5, ..]).iter().zip(rb.output.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn prepare_validates() {
        let (enc, _) = tiny();
        assert_eq!(enc.prepare(&[5, PAD, 6, PAD]).unwrap(), vec![5, 6]);
        assert!(matches!(enc.prepare(&[99]), Err(DistillError::TokenOutOfRange { id: 99, .. })));
        assert!(matches!(enc.prepare(&[5; 7]), Err(DistillError::TooLong { len: 7, max_len: 6 })));
        assert!(matches!(enc.prepare(&[PAD]), Err(DistillError::EmptySequence)));
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig {
            width: 10,
            heads: 3,
            ..EncoderConfig::default()
        };
        assert!(Encoder::new(bad).is_err());
    }

    #[test]
    fn pool_picks_maxima() {
        let states = Array2::from_shape_vec((3, 2), vec![1.0, -1.0, 3.0, -2.0, 2.0, 0.5]).unwrap();
        let (pooled, winners) = max_pool(&states, &[0..3]);
        assert_eq!(pooled.row(0).to_vec(), vec![3.0, 0.5]);
        assert_eq!(winners, vec![1, 2]);
    }
}
