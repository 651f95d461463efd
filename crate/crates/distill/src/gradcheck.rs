//! Central finite-difference check of [`batch_loss`] gradients.

use crate::encoder::Encoder;
use crate::error::Result;
use crate::train::{batch_loss, MaskedSeq};

/// Relative error used for gradient comparisons: `|a - n| / max(|a| + |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compares the analytic gradient of the total batch loss with central
/// differences of step `eps` on every `stride`-th entry of each tensor
/// (always including the first entry).
pub fn check_gradients(
    enc: &Encoder,
    params: &[f64],
    parallel: &[(Vec<u32>, Vec<f64>)],
    masked: &[MaskedSeq],
    mlm_weight: f64,
    eps: f64,
    stride: usize,
) -> Result<GradCheck> {
    let mut grads = vec![0.0; params.len()];
    batch_loss(enc, params, parallel, masked, mlm_weight, Some(&mut grads))?;
    let mut p = params.to_vec();
    let mut out = GradCheck {
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
    };
    for (name, range) in enc.layout().tensors() {
        for i in range.clone().step_by(stride.max(1)) {
            let orig = p[i];
            p[i] = orig + eps;
            let up = batch_loss(enc, &p, parallel, masked, mlm_weight, None)?.total;
            p[i] = orig - eps;
            let down = batch_loss(enc, &p, parallel, masked, mlm_weight, None)?.total;
            p[i] = orig;
            let err = relative_error(grads[i], (up - down) / (2.0 * eps));
            out.checked += 1;
            if err > out.max_relative_error {
                out.max_relative_error = err;
                out.worst = (name.clone(), i - range.start);
            }
        }
    }
    Ok(out)
}
