//! Joint distillation + masked-LM training.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use bitext_core::EmbeddingMatrix;

use crate::curriculum::{prefix_len, truncate_words, CurriculumSchedule};
use crate::encoder::{max_pool, max_pool_backward, Encoder, EncoderConfig};
use crate::error::{DistillError, Result};
use crate::loss::{cosine_loss_grad, cross_entropy};
use crate::optim::{Adam, AdamConfig};
use crate::teacher::Teacher;
use crate::vocab::{SubwordVocab, MASK, NUM_SPECIAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub lr: f64,
    /// Parallel pairs per step; monolingual batches use the same size.
    pub batch_size: usize,
    pub mlm_weight: f64,
    pub mask_prob: f64,
    pub curriculum: Option<CurriculumSchedule>,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            batch_size: 32,
            mlm_weight: 1.0,
            mask_prob: 0.15,
            curriculum: None,
            steps: 1000,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DistillError::InvalidConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.mlm_weight >= 0.0 && self.mlm_weight.is_finite()) {
            return bad(format!("mlm_weight must be non-negative, got {}", self.mlm_weight));
        }
        if !(0.0..1.0).contains(&self.mask_prob) {
            return bad(format!("mask_prob must lie in [0, 1), got {}", self.mask_prob));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// A trained or freshly initialized student encoder with its vocabulary.
#[derive(Debug, Clone)]
pub struct Student {
    pub vocab: SubwordVocab,
    pub encoder: Encoder,
    pub params: Vec<f64>,
}

impl Student {
    /// Builds an encoder sized to `vocab` and initializes it from `seed`.
    pub fn init(vocab: SubwordVocab, mut cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.vocab_size = vocab.len();
        let encoder = Encoder::new(cfg)?;
        let params = encoder.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { vocab, encoder, params })
    }

    pub fn dim(&self) -> usize {
        self.encoder.config().width
    }

    /// Max-pooled final states of one token sequence; PAD ids are ignored.
    pub fn encode(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let ids = self.encoder.prepare(tokens)?;
        let cache = self.encoder.forward(&self.params, &[&ids]);
        let (pooled, _) = max_pool(&cache.output, cache.spans());
        Ok(pooled.row(0).to_vec())
    }

    /// Tokenizes and encodes text, keeping at most `max_len` tokens.
    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.encode(&self.tokens_for(text))
    }

    pub fn tokens_for(&self, text: &str) -> Vec<u32> {
        let mut t = self.vocab.tokenize(text);
        t.truncate(self.encoder.config().max_len);
        t
    }

    /// Embeds many sentences, packing them into chunks for speed.
    pub fn embed_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(texts.len() * self.dim());
        for chunk in texts.chunks(64) {
            let seqs: Vec<Vec<u32>> = chunk
                .iter()
                .map(|t| self.encoder.prepare(&self.tokens_for(t.as_ref())))
                .collect::<Result<_>>()?;
            let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
            let cache = self.encoder.forward(&self.params, &refs);
            let (pooled, _) = max_pool(&cache.output, cache.spans());
            data.extend(pooled.iter().map(|&v| v as f32));
        }
        Ok(EmbeddingMatrix::new(self.dim(), data)?)
    }

    /// Masked-LM loss: `masked_positions` are replaced by the mask token and
    /// their original ids predicted.
    pub fn mlm_loss(&self, tokens: &[u32], masked_positions: &[usize]) -> Result<f64> {
        let seq = MaskedSeq::with_mask_token(tokens, masked_positions)?;
        let parts = batch_loss(&self.encoder, &self.params, &[], &[seq], 1.0, None)?;
        Ok(parts.mlm)
    }
}

/// A sequence whose `positions` were corrupted; `targets` holds the
/// original ids at those positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSeq {
    pub input: Vec<u32>,
    pub positions: Vec<usize>,
    pub targets: Vec<u32>,
}

impl MaskedSeq {
    pub fn with_mask_token(tokens: &[u32], positions: &[usize]) -> Result<Self> {
        if positions.is_empty() {
            return Err(DistillError::NoMaskedPositions);
        }
        let mut input = tokens.to_vec();
        let mut targets = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= tokens.len() {
                return Err(DistillError::MaskOutOfRange { pos: p, len: tokens.len() });
            }
            targets.push(tokens[p]);
            input[p] = MASK;
        }
        Ok(Self {
            input,
            positions: positions.to_vec(),
            targets,
        })
    }
}

/// Standard masking: each non-special position is picked with `prob`
/// (at least one per sequence); picked positions become the mask token
/// 80% of the time, a random piece 10%, and stay unchanged 10%.
pub fn mask_tokens<R: Rng>(tokens: &[u32], prob: f64, vocab_size: usize, rng: &mut R) -> Option<MaskedSeq> {
    let maskable: Vec<usize> = (0..tokens.len()).filter(|&i| !SubwordVocab::is_special(tokens[i])).collect();
    if maskable.is_empty() {
        return None;
    }
    let mut positions: Vec<usize> = maskable.iter().copied().filter(|_| rng.random::<f64>() < prob).collect();
    if positions.is_empty() {
        positions.push(maskable[rng.random_range(0..maskable.len())]);
    }
    let mut input = tokens.to_vec();
    let targets = positions.iter().map(|&p| tokens[p]).collect();
    for &p in &positions {
        let r: f64 = rng.random();
        if r < 0.8 {
            input[p] = MASK;
        } else if r < 0.9 && vocab_size > NUM_SPECIAL {
            input[p] = rng.random_range(NUM_SPECIAL as u32..vocab_size as u32);
        }
    }
    Some(MaskedSeq { input, positions, targets })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cosine: f64,
    pub mlm: f64,
    pub total: f64,
}

/// `cosine_mean + mlm_weight * mlm_mean` over one batch, accumulating its
/// gradient into `grads` when given.
///
/// The cosine term averages over parallel examples; the masked-LM term
/// averages over all masked positions in the batch. With no masked
/// sequences, or a zero weight, the masked-LM pass is skipped.
pub fn batch_loss(
    enc: &Encoder,
    params: &[f64],
    parallel: &[(Vec<u32>, Vec<f64>)],
    masked: &[MaskedSeq],
    mlm_weight: f64,
    mut grads: Option<&mut [f64]>,
) -> Result<LossParts> {
    let mut cosine = 0.0;
    if !parallel.is_empty() {
        let seqs: Vec<&[u32]> = parallel.iter().map(|(t, _)| t.as_slice()).collect();
        let cache = enc.forward(params, &seqs);
        let (pooled, winners) = max_pool(&cache.output, cache.spans());
        let b = parallel.len() as f64;
        let mut d_pooled = Array2::zeros(pooled.raw_dim());
        for (i, (_, teacher)) in parallel.iter().enumerate() {
            let (l, g) = cosine_loss_grad(pooled.row(i), Array1::from(teacher.clone()).view())?;
            cosine += l / b;
            d_pooled.row_mut(i).assign(&(Array1::from(g) / b));
        }
        if let Some(g) = grads.as_deref_mut() {
            let d_out = max_pool_backward(&d_pooled, &winners, cache.output.nrows());
            enc.backward(params, &cache, &d_out, g);
        }
    }

    let mut mlm = 0.0;
    if !masked.is_empty() && mlm_weight > 0.0 {
        for m in masked {
            if m.positions.is_empty() {
                return Err(DistillError::NoMaskedPositions);
            }
            if let Some(&p) = m.positions.iter().find(|&&p| p >= m.input.len()) {
                return Err(DistillError::MaskOutOfRange { pos: p, len: m.input.len() });
            }
        }
        let seqs: Vec<&[u32]> = masked.iter().map(|m| m.input.as_slice()).collect();
        let cache = enc.forward(params, &seqs);
        let rows: Vec<usize> = masked
            .iter()
            .zip(cache.spans())
            .flat_map(|(m, span)| m.positions.iter().map(move |&p| span.start + p))
            .collect();
        let targets: Vec<u32> = masked.iter().flat_map(|m| m.targets.iter().copied()).collect();
        let states = cache.output.select(ndarray::Axis(0), &rows);
        let (logits, mlm_cache) = enc.mlm_forward(params, &states);
        let (l, d_logits) = cross_entropy(&logits, &targets)?;
        mlm = l;
        if let Some(g) = grads {
            let d_states = enc.mlm_backward(params, &states, &mlm_cache, &(d_logits * mlm_weight), g);
            let mut d_out = Array2::zeros(cache.output.raw_dim());
            for (r, row) in rows.iter().zip(d_states.outer_iter()) {
                let mut dst = d_out.row_mut(*r);
                dst += &row;
            }
            enc.backward(params, &cache, &d_out, g);
        }
    }
    Ok(LossParts {
        cosine,
        mlm,
        total: cosine + mlm_weight * mlm,
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One optimizer step's input.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    /// Student token ids with the teacher embedding they should match.
    pub parallel: Vec<(Vec<u32>, Vec<f64>)>,
    /// Student-language sequences for the masked-LM objective.
    pub mono: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub cosine_loss: f64,
    pub mlm_loss: f64,
    pub total: f64,
}

/// Training data in text form.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// (student sentence, teacher sentence) pairs.
    pub parallel: Vec<(String, String)>,
    /// Student-language monolingual lines for the masked-LM objective.
    pub mono: Vec<String>,
    /// Teacher-language lines distilled onto themselves.
    pub anchor: Vec<String>,
}

impl Corpus {
    /// Lines a student vocabulary should be trained on.
    pub fn student_lines(&self) -> Vec<&str> {
        self.parallel
            .iter()
            .map(|(s, _)| s.as_str())
            .chain(self.mono.iter().map(String::as_str))
            .chain(self.anchor.iter().map(String::as_str))
            .collect()
    }
}

/// Optimizer state plus the random streams that drive training.
pub struct Trainer {
    pub student: Student,
    cfg: DistillConfig,
    opt: Adam,
    mask_rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(student: Student, cfg: DistillConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = Adam::new(cfg.adam(), student.params.len());
        let mask_rng = stream_rng(cfg.seed, 3);
        Ok(Self {
            student,
            cfg,
            opt,
            mask_rng,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// One joint update. Masking draws from the trainer's own random stream
    /// and is skipped entirely when the masked-LM weight is zero.
    pub fn train_step(&mut self, batch: &TrainBatch) -> Result<StepMetrics> {
        let enc = &self.student.encoder;
        for (toks, teacher) in &batch.parallel {
            enc.prepare(toks)?;
            if teacher.len() != enc.config().width {
                return Err(DistillError::DimMismatch {
                    left: enc.config().width,
                    right: teacher.len(),
                });
            }
        }
        let masked: Vec<MaskedSeq> = if self.cfg.mlm_weight > 0.0 {
            batch
                .mono
                .iter()
                .filter_map(|t| mask_tokens(t, self.cfg.mask_prob, enc.config().vocab_size, &mut self.mask_rng))
                .collect()
        } else {
            Vec::new()
        };
        for m in &masked {
            enc.prepare(&m.input)?;
        }
        let mut grads = vec![0.0; self.student.params.len()];
        let parts = batch_loss(enc, &self.student.params, &batch.parallel, &masked, self.cfg.mlm_weight, Some(&mut grads))?;
        self.step += 1;
        if !parts.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(DistillError::NonFiniteLoss { step: self.step });
        }
        self.opt.step(&mut self.student.params, &grads);
        Ok(StepMetrics {
            step: self.step,
            cosine_loss: parts.cosine,
            mlm_loss: parts.mlm,
            total: parts.total,
        })
    }
}

struct PreparedPair {
    tokens: Vec<u32>,
    teacher_text: String,
}

/// Runs `cfg.steps` joint updates and returns the student with the
/// per-step metrics. `on_step` sees each step's metrics as it happens.
///
/// Parallel data is visited in shuffled epochs of `batch_size` pairs; with
/// a curriculum, epoch `e` trains on the `increments[e % n]` prefix of
/// every pair, the teacher side being re-embedded from the matching word
/// prefix. Monolingual batches come from an independent shuffled stream
/// and are only drawn when the masked-LM weight is positive.
pub fn train<T: Teacher + ?Sized>(
    student: Student,
    corpus: &Corpus,
    teacher: &T,
    cfg: &DistillConfig,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<(Student, Vec<StepMetrics>)> {
    cfg.validate()?;
    if teacher.dim() != student.dim() {
        return Err(DistillError::DimMismatch {
            left: student.dim(),
            right: teacher.dim(),
        });
    }
    let pairs: Vec<PreparedPair> = corpus
        .parallel
        .iter()
        .map(|(s, t)| (s.as_str(), t.as_str()))
        .chain(corpus.anchor.iter().map(|s| (s.as_str(), s.as_str())))
        .map(|(s, t)| PreparedPair {
            tokens: student.tokens_for(s),
            teacher_text: t.to_string(),
        })
        .collect();
    let mono: Vec<Vec<u32>> = if cfg.mlm_weight > 0.0 {
        corpus.mono.iter().map(|l| student.tokens_for(l)).collect()
    } else {
        Vec::new()
    };
    if pairs.is_empty() && cfg.steps > 0 && mono.is_empty() {
        return Err(DistillError::EmptyCorpus);
    }

    let schedule = cfg.curriculum.clone().unwrap_or_else(|| CurriculumSchedule::new(vec![1.0]).expect("valid"));
    let dim = student.dim();
    let mut teacher_cache: HashMap<String, Vec<f64>> = HashMap::new();
    let mut teacher_embed = |text: String| -> Result<Vec<f64>> {
        if let Some(v) = teacher_cache.get(&text) {
            return Ok(v.clone());
        }
        let v = teacher.embed(&text)?;
        if v.len() != dim {
            return Err(DistillError::DimMismatch {
                left: dim,
                right: v.len(),
            });
        }
        teacher_cache.insert(text, v.clone());
        Ok(v)
    };

    let mut data_rng = stream_rng(cfg.seed, 1);
    let mut mono_rng = stream_rng(cfg.seed, 2);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0;
    let mut mono_order: Vec<usize> = Vec::new();
    let mut mono_cursor = 0;

    let mut trainer = Trainer::new(student, cfg.clone())?;
    let mut log = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut batch = TrainBatch::default();
        if !pairs.is_empty() {
            if cursor >= order.len() {
                if !order.is_empty() {
                    epoch += 1;
                }
                order = (0..pairs.len()).collect();
                order.shuffle(&mut data_rng);
                cursor = 0;
            }
            let f = schedule.for_epoch(epoch);
            let end = (cursor + cfg.batch_size).min(order.len());
            for &i in &order[cursor..end] {
                let p = &pairs[i];
                let toks = p.tokens[..prefix_len(p.tokens.len(), f)].to_vec();
                let text = if f < 1.0 { truncate_words(&p.teacher_text, f) } else { p.teacher_text.clone() };
                batch.parallel.push((toks, teacher_embed(text)?));
            }
            cursor = end;
        }
        if !mono.is_empty() {
            for _ in 0..cfg.batch_size {
                if mono_cursor >= mono_order.len() {
                    mono_order = (0..mono.len()).collect();
                    mono_order.shuffle(&mut mono_rng);
                    mono_cursor = 0;
                }
                batch.mono.push(mono[mono_order[mono_cursor]].clone());
                mono_cursor += 1;
            }
        }
        let m = trainer.train_step(&batch)?;
        on_step(&m);
        log.push(m);
    }
    Ok((trainer.student, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::SyntheticTeacher;

    fn tiny_student(seed: u64) -> Student {
        let vocab = SubwordVocab::train(&["ab ba aab", "bb a"], 12).unwrap();
        let cfg = EncoderConfig {
            layers: 1,
            width: 8,
            heads: 2,
            ffn_mult: 2,
            vocab_size: 0,
            max_len: 8,
        };
        Student::init(vocab, cfg, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(DistillConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(DistillConfig { mask_prob: 1.0, ..Default::default() }.validate().is_err());
        assert!(DistillConfig::default().validate().is_ok());
    }

    #[test]
    fn masking_picks_non_special_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let m = mask_tokens(&[3, 7, 8, 9, 4], 0.15, 20, &mut rng).unwrap();
            assert!(!m.positions.is_empty());
            assert!(m.positions.iter().all(|&p| (1..4).contains(&p)));
            assert_eq!(m.targets, m.positions.iter().map(|&p| [3, 7, 8, 9, 4][p]).collect::<Vec<_>>());
        }
        assert!(mask_tokens(&[0, 1, 2], 0.5, 20, &mut rng).is_none());
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let s = tiny_student(5);
        let init = s.params.clone();
        let corpus = Corpus {
            parallel: vec![("ab".into(), "x".into())],
            ..Default::default()
        };
        let cfg = DistillConfig { steps: 0, ..Default::default() };
        let (out, log) = train(s, &corpus, &SyntheticTeacher::new(8, 0), &cfg, |_| {}).unwrap();
        assert_eq!(out.params, init);
        assert!(log.is_empty());
    }

    #[test]
    fn teacher_dim_must_match() {
        let corpus = Corpus {
            parallel: vec![("ab".into(), "x".into())],
            ..Default::default()
        };
        let r = train(tiny_student(0), &corpus, &SyntheticTeacher::new(4, 0), &DistillConfig::default(), |_| {});
        assert!(matches!(r, Err(DistillError::DimMismatch { .. })));
    }

    #[test]
    fn mlm_loss_requires_positions() {
        let s = tiny_student(0);
        assert!(matches!(s.mlm_loss(&[5, 6], &[]), Err(DistillError::NoMaskedPositions)));
        assert!(matches!(s.mlm_loss(&[5, 6], &[2]), Err(DistillError::MaskOutOfRange { pos: 2, len: 2 })));
        assert!(s.mlm_loss(&[5, 6], &[1]).unwrap() > 0.0);
    }
}
