use std::time::Instant;

use bitext_core::{mine, Direction, EmbeddingMatrix, MineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let d = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut gen = |n: usize| {
        let data = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        EmbeddingMatrix::new(d, data).unwrap().l2_normalize().unwrap()
    };
    let a = gen(n);
    let b = gen(n);
    let cfg = MineConfig {
        direction: Direction::Union,
        ..MineConfig::default()
    };
    let t = Instant::now();
    let out = mine(&a, &b, &cfg).unwrap();
    println!("n={n} pairs={} elapsed={:.2?}", out.pairs.len(), t.elapsed());
}
