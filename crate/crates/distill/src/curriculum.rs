//! Progressive prefix curriculum.

use serde::{Deserialize, Serialize};

use crate::error::{DistillError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    increments: Vec<f64>,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self::uniform(0.1).expect("0.1 divides one")
    }
}

impl CurriculumSchedule {
    /// Fractions must be strictly increasing, in `(0, 1]`, and end at `1.0`.
    pub fn new(increments: Vec<f64>) -> Result<Self> {
        let bad = |m: &str| Err(DistillError::InvalidConfig(format!("curriculum: {m}")));
        if increments.last() != Some(&1.0) {
            return bad("last increment must be 1.0");
        }
        if increments.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("increments must lie in (0, 1]");
        }
        if increments.windows(2).any(|w| w[0] >= w[1]) {
            return bad("increments must be strictly increasing");
        }
        Ok(Self { increments })
    }

    /// `step, 2*step, ..., 1.0`; e.g. `0.1` gives ten increments.
    pub fn uniform(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(DistillError::InvalidConfig(format!("curriculum step {step} must lie in (0, 1]")));
        }
        let n = (1.0 / step - 1e-9).ceil() as usize;
        let mut inc: Vec<f64> = (1..n).map(|i| i as f64 * step).collect();
        inc.push(1.0);
        Self::new(inc)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increment used in a given epoch; epochs cycle through the schedule.
    pub fn for_epoch(&self, epoch: usize) -> f64 {
        self.increments[epoch % self.increments.len()]
    }
}

/// Length of the `fraction` prefix of a sequence of `len` items; at least one.
pub fn prefix_len(len: usize, fraction: f64) -> usize {
    // Small slack so 0.3 * 10 does not round up to 4.
    let raw = fraction * len as f64;
    ((raw - 1e-9).ceil() as usize).clamp(1.min(len), len)
}

/// Teacher-side truncation: first `ceil(f * words)` whitespace-separated words.
pub fn truncate_words(sentence: &str, fraction: f64) -> String {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    words[..prefix_len(words.len(), fraction)].join(" ")
}

/// A training view: a student token prefix paired with the truncated
/// teacher sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub fraction_index: usize,
    pub tokens: Vec<u32>,
    pub teacher_text: String,
}

/// One view per increment, with views identical to an earlier one dropped.
/// The last view is always the full pair.
pub fn curriculum_views(tokens: &[u32], teacher_text: &str, sched: &CurriculumSchedule) -> Vec<View> {
    let mut out: Vec<View> = Vec::new();
    for (i, &f) in sched.increments().iter().enumerate() {
        let view = View {
            fraction_index: i,
            tokens: tokens[..prefix_len(tokens.len(), f)].to_vec(),
            teacher_text: truncate_words(teacher_text, f),
        };
        if out.last().is_some_and(|v| v.tokens == view.tokens && v.teacher_text == view.teacher_text) {
            out.pop();
        }
        out.push(view);
    }
    out
}
