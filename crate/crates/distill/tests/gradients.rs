use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bitext_distill::encoder::{max_pool, Encoder, EncoderConfig};
use bitext_distill::gradcheck::check_gradients;
use bitext_distill::train::MaskedSeq;

fn setup(seed: u64) -> (Encoder, Vec<f64>, Vec<(Vec<u32>, Vec<f64>)>, Vec<MaskedSeq>) {
    let cfg = EncoderConfig {
        layers: 2,
        width: 16,
        heads: 2,
        ffn_mult: 4,
        vocab_size: 32,
        max_len: 8,
    };
    let enc = Encoder::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = enc.init_params(&mut rng);
    // Perturb biases and gains away from their trivial starting values.
    for v in params.iter_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    let seq = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        let n = rng.random_range(3..=8);
        (0..n).map(|_| rng.random_range(5..32)).collect()
    };
    let parallel = (0..3)
        .map(|_| {
            let t = seq(&mut rng);
            let teacher = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            (t, teacher)
        })
        .collect();
    let masked = (0..2)
        .map(|_| {
            let t = seq(&mut rng);
            MaskedSeq::with_mask_token(&t, &[0, t.len() - 1]).unwrap()
        })
        .collect();
    (enc, params, parallel, masked)
}

#[test]
fn cosine_gradients_match_finite_differences() {
    let (enc, params, parallel, _) = setup(1);
    let r = check_gradients(&enc, &params, &parallel, &[], 0.0, 1e-5, 1).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn mlm_gradients_match_finite_differences() {
    let (enc, params, _, masked) = setup(2);
    let r = check_gradients(&enc, &params, &[], &masked, 1.0, 1e-5, 1).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn joint_gradients_match_finite_differences() {
    let (enc, params, parallel, masked) = setup(3);
    let r = check_gradients(&enc, &params, &parallel, &masked, 0.7, 1e-5, 3).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn pooling_dominates_every_token_state() {
    let (enc, params, parallel, _) = setup(4);
    let seqs: Vec<&[u32]> = parallel.iter().map(|(t, _)| t.as_slice()).collect();
    let cache = enc.forward(&params, &seqs);
    let (pooled, _) = max_pool(&cache.output, cache.spans());
    for (b, span) in cache.spans().iter().enumerate() {
        for r in span.clone() {
            for j in 0..16 {
                assert!(pooled[[b, j]] >= cache.output[[r, j]]);
            }
        }
    }
}
