//! Cosine distillation loss and masked-LM cross-entropy.

use ndarray::{Array2, ArrayView1};

use crate::error::{DistillError, Result};

/// `1 - cos(s, t)` and its gradient with respect to `s`.
pub fn cosine_loss_grad(s: ArrayView1<f64>, t: ArrayView1<f64>) -> Result<(f64, Vec<f64>)> {
    if s.len() != t.len() {
        return Err(DistillError::DimMismatch {
            left: s.len(),
            right: t.len(),
        });
    }
    let ns = s.dot(&s).sqrt();
    let nt = t.dot(&t).sqrt();
    if ns == 0.0 || nt == 0.0 {
        return Err(DistillError::ZeroNorm);
    }
    let cos = s.dot(&t) / (ns * nt);
    // d cos / d s = t / (|s||t|) - cos * s / |s|^2
    let grad = s
        .iter()
        .zip(t.iter())
        .map(|(&si, &ti)| -(ti / (ns * nt) - cos * si / (ns * ns)))
        .collect();
    Ok((1.0 - cos.clamp(-1.0, 1.0), grad))
}

pub fn cosine_loss(s: &[f64], t: &[f64]) -> Result<f64> {
    cosine_loss_grad(ArrayView1::from(s), ArrayView1::from(t)).map(|(l, _)| l)
}

/// Mean softmax cross-entropy of `logits` rows against `targets`, with the
/// gradient of that mean with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[u32]) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(DistillError::NoMaskedPositions);
    }
    assert_eq!(logits.nrows(), targets.len(), "one logits row per target");
    let n = targets.len() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (i, (mut row, &t)) in grad.outer_iter_mut().zip(targets).enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        total += z.ln() + m - logits[[i, t as usize]];
        row.mapv_inplace(|v| v / z / n);
        row[t as usize] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_and_antipodal() {
        assert!(cosine_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-12);
        assert!((cosine_loss(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(cosine_loss(&[0.0, 0.0], &[1.0, 0.0]), Err(DistillError::ZeroNorm)));
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let s = [0.3, -1.2, 0.7, 2.0];
        let t = [1.0, 0.5, -0.4, 0.9];
        let (_, g) = cosine_loss_grad(ArrayView1::from(&s[..]), ArrayView1::from(&t[..])).unwrap();
        let eps = 1e-6;
        for i in 0..s.len() {
            let mut a = s;
            let mut b = s;
            a[i] += eps;
            b[i] -= eps;
            let num = (cosine_loss(&a, &t).unwrap() - cosine_loss(&b, &t).unwrap()) / (2.0 * eps);
            assert!((num - g[i]).abs() / (num.abs() + g[i].abs()).max(1e-6) < 1e-6);
        }
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let logits = Array2::zeros((3, 8));
        let (l, _) = cross_entropy(&logits, &[0, 5, 7]).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_prediction_gives_zero() {
        let logits = array![[0.0, 800.0, 0.0]];
        let (l, _) = cross_entropy(&logits, &[1]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(matches!(cross_entropy(&Array2::zeros((0, 3)), &[]), Err(DistillError::NoMaskedPositions)));
    }
}
