mod oracle;

use std::collections::BTreeMap;

use proptest::prelude::*;

use bitext_core::knn::topk;
use bitext_core::margin::margin_argmax;
use bitext_core::mine::{mine, Direction, MineConfig};
use bitext_core::{EmbeddingMatrix, MarginConfig, MarginFn};

use oracle::Margin;

fn matrix(rows: &[Vec<f32>]) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(rows[0].len(), rows).unwrap()
}

fn oracle_margin(f: MarginFn) -> Margin {
    match f {
        MarginFn::Absolute => Margin::Absolute,
        MarginFn::Ratio => Margin::Ratio,
        MarginFn::Distance => Margin::Distance,
    }
}

/// Rows with entries in [-1, 1] and no zero rows.
fn rows_strategy(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), 4..=max_n).prop_map(|mut rows| {
        for r in &mut rows {
            if r.iter().all(|&v| v == 0.0) {
                r[0] = 1.0;
            }
        }
        rows
    })
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<Vec<f32>>, usize)> {
    (prop::sample::select(vec![2usize, 5, 16]), 1usize..=4).prop_flat_map(|(d, k)| {
        (rows_strategy(40, d), rows_strategy(40, d), Just(k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn topk_matches_brute_force((a, b, k) in instance()) {
        let nn = topk(&matrix(&a), &matrix(&b), k).unwrap();
        let cos = oracle::raw_cosines(&a, &b);
        for (i, row) in cos.iter().enumerate() {
            let expected = oracle::top(row, k);
            prop_assert_eq!(nn.indices(i), &expected[..]);
            for (r, &j) in expected.iter().enumerate() {
                prop_assert!((nn.scores(i)[r] - row[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn margin_argmax_matches_brute_force((a, b, k) in instance(), f in prop::sample::select(MarginFn::ALL.to_vec())) {
        let cfg = MarginConfig { k, function: f, ..Default::default() };
        let got = margin_argmax(&matrix(&a), &matrix(&b), &cfg).unwrap();
        let scores = oracle::margin_matrix(&oracle::normalize(&a), &oracle::normalize(&b), k, oracle_margin(f));
        for (i, row) in scores.iter().enumerate() {
            let j = oracle::top(row, 1)[0];
            prop_assert_eq!(got[i].0, j);
            prop_assert_eq!(got[i].1, row[j]);
        }
    }

    #[test]
    fn mined_pairs_match_brute_force(
        (a, b, k) in instance(),
        f in prop::sample::select(MarginFn::ALL.to_vec()),
        dir in prop::sample::select(vec![Direction::Forward, Direction::Backward, Direction::Union]),
        c in 1usize..=2,
        quantile in 0.0f64..1.0,
    ) {
        let scores = oracle::margin_matrix(&oracle::normalize(&a), &oracle::normalize(&b), k, oracle_margin(f));
        let mut flat: Vec<f64> = scores.iter().flatten().copied().collect();
        flat.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let threshold = flat[((flat.len() - 1) as f64 * quantile) as usize];
        let expected = match dir {
            Direction::Forward => oracle::mine_rows(&scores, c, threshold),
            Direction::Backward => oracle::mine_cols(&scores, c, threshold),
            Direction::Union => oracle::mine_union(&scores, c, threshold),
        };
        let cfg = MineConfig {
            margin: MarginConfig { k, function: f, ..Default::default() },
            threshold,
            candidates_per_query: c,
            direction: dir,
        };
        let got: BTreeMap<(usize, usize), f64> = mine(&matrix(&a), &matrix(&b), &cfg)
            .unwrap()
            .pairs
            .into_iter()
            .map(|p| ((p.src_idx, p.tgt_idx), p.score))
            .collect();
        prop_assert_eq!(got, expected);
    }
}
