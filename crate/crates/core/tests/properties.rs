//! Randomized property tests over the public API. Oracles here are written
//! independently of the implementations they check: the mask predicate is a
//! fresh rule-by-rule transcription, the matmul reference is the naive
//! triple loop, and probability facts are checked from first principles.

use proptest::prelude::*;

use mash_core::dst_attention::{full_dst_mask, AttentionConfig, AttnDir, MaskMode};
use mash_core::harness::checkpoint::{decode, encode, Entry};
use mash_core::harness::config::RunConfig;
use mash_core::harness::dataset::{gen_dataset, Dataset, GenConfig, Regime};
use mash_core::harness::eval::{evaluate_dual, Answerer, DUAL_CELLS};
use mash_core::numerics::{matmul, softmax_masked, Matrix};
use mash_core::positional::{
    balanced_ids, distinct_ids, harmonic_rotate, rope_rotate, PositionIds, RopeConfig, RopeScheme,
};
use mash_core::token_pipeline::TokenTag;

// --- independent mask predicate -------------------------------------------

fn permits_oracle(i: usize, j: usize, tags: &[TokenTag], cfg: &AttentionConfig) -> bool {
    if cfg.mask_mode == MaskMode::FullCausal {
        return j <= i;
    }
    match (tags[i], tags[j]) {
        (TokenTag::Text, TokenTag::Text) => j <= i,
        (TokenTag::Text, _) => true,
        (_, TokenTag::Text) => false,
        (qi, qj) => {
            let dir = if qi == TokenTag::Temporal { cfg.temporal_attn } else { cfg.spatial_attn };
            let structural = match dir {
                AttnDir::Causal => j <= i,
                AttnDir::Bidirectional => true,
            };
            structural && (!cfg.disentangle || qi == qj)
        }
    }
}

fn layout_tags(m: usize, n: usize, l: usize) -> Vec<TokenTag> {
    let mut tags = vec![TokenTag::Temporal; m];
    tags.extend(std::iter::repeat(TokenTag::Spatial).take(n));
    tags.extend(std::iter::repeat(TokenTag::Text).take(l));
    tags
}

fn arb_attention_config() -> impl Strategy<Value = AttentionConfig> {
    (
        prop_oneof![Just(MaskMode::FullCausal), Just(MaskMode::Dst)],
        prop_oneof![Just(AttnDir::Causal), Just(AttnDir::Bidirectional)],
        prop_oneof![Just(AttnDir::Causal), Just(AttnDir::Bidirectional)],
        any::<bool>(),
        prop_oneof![
            Just(RopeScheme::Distinct),
            Just(RopeScheme::Balanced),
            Just(RopeScheme::Harmonic)
        ],
    )
        .prop_map(|(mask_mode, temporal_attn, spatial_attn, disentangle, rope_scheme)| {
            AttentionConfig {
                heads: 2,
                head_dim: 4,
                mask_mode,
                temporal_attn,
                spatial_attn,
                disentangle,
                rope_scheme,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mask_matches_independent_predicate(
        m in 1usize..22,
        n in 1usize..22,
        l in 1usize..22,
        cfg in arb_attention_config(),
    ) {
        let tags = layout_tags(m, n, l);
        let mask = full_dst_mask(&tags, &cfg).unwrap();
        for i in 0..tags.len() {
            for j in 0..tags.len() {
                prop_assert_eq!(
                    mask.permits(i, j),
                    permits_oracle(i, j, &tags, &cfg),
                    "disagree at ({}, {}) for {:?}", i, j, cfg
                );
            }
        }
    }

    #[test]
    fn rope_dot_products_are_shift_invariant(
        q in prop::collection::vec(-2.0f64..2.0, 8),
        k in prop::collection::vec(-2.0f64..2.0, 8),
        m in 0usize..128,
        n in 0usize..128,
        s in 0usize..128,
    ) {
        let cfg = RopeConfig::with_default_base(8).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let base = dot(&rope_rotate(&q, m, &cfg).unwrap(), &rope_rotate(&k, n, &cfg).unwrap());
        let shifted =
            dot(&rope_rotate(&q, m + s, &cfg).unwrap(), &rope_rotate(&k, n + s, &cfg).unwrap());
        prop_assert!((base - shifted).abs() < 1e-9, "|{base} - {shifted}|");
    }

    #[test]
    fn harmonic_rotation_interleaves_pure_schemes(
        rows in 1usize..12,
        m in 1usize..6,
        l in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let n = m + 2; // keep the balanced track valid
        let total = m + n + l;
        let _ = rows;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let x = Matrix::randn(total, 8, 1.0, &mut rng);
        let cfg = RopeConfig::with_default_base(8).unwrap();
        let ids = PositionIds::build(n, m, l).unwrap();
        let harmonic = harmonic_rotate(&x, &ids, &cfg, RopeScheme::Harmonic).unwrap();
        let balanced = harmonic_rotate(&x, &ids, &cfg, RopeScheme::Balanced).unwrap();
        let distinct = harmonic_rotate(&x, &ids, &cfg, RopeScheme::Distinct).unwrap();
        for r in 0..total {
            for pair in 0..4 {
                let source = if pair % 2 == 0 { &balanced } else { &distinct };
                for offset in [0, 1] {
                    let c = 2 * pair + offset;
                    prop_assert_eq!(
                        harmonic.get(r, c).to_bits(),
                        source.get(r, c).to_bits(),
                        "row {} col {}", r, c
                    );
                }
            }
        }
    }

    #[test]
    fn masked_softmax_is_a_distribution_over_permitted_entries(
        rows in 1usize..8,
        cols in 2usize..8,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let logits = Matrix::randn(rows, cols, 3.0, &mut rng);
        // Random mask with at least one permitted entry per row.
        let mut mask = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let keep = rng.random_range(0..cols);
            for j in 0..cols {
                if j != keep && rng.random::<bool>() {
                    mask.set(i, j, f64::NEG_INFINITY);
                }
            }
        }
        let probs = softmax_masked(&logits, &mask).unwrap();
        for i in 0..rows {
            let mut total = 0.0;
            for j in 0..cols {
                let p = probs.get(i, j);
                if mask.get(i, j) == f64::NEG_INFINITY {
                    prop_assert_eq!(p.to_bits(), 0.0f64.to_bits(), "masked entry not exactly 0");
                } else {
                    prop_assert!(p >= 0.0);
                }
                total += p;
            }
            prop_assert!((total - 1.0).abs() < 1e-12, "row {} sums to {}", i, total);
        }
    }

    #[test]
    fn matmul_matches_naive_triple_loop(
        a_rows in 1usize..9,
        inner in 1usize..9,
        b_cols in 1usize..9,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let a = Matrix::randn(a_rows, inner, 1.0, &mut rng);
        let b = Matrix::randn(inner, b_cols, 1.0, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        for i in 0..a_rows {
            for j in 0..b_cols {
                let mut acc = 0.0;
                for k in 0..inner {
                    acc += a.get(i, k) * b.get(k, j);
                }
                prop_assert_eq!(fast.get(i, j).to_bits(), acc.to_bits(), "entry ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn id_tracks_follow_their_closed_forms(n in 1usize..40, m in 1usize..40, l in 0usize..10) {
        let distinct = distinct_ids(n, m, l);
        prop_assert_eq!(distinct, (1..=m + n + l).collect::<Vec<_>>());
        if m <= n {
            let balanced = balanced_ids(n, m, l).unwrap();
            prop_assert_eq!(&balanced[..m], &(n - m + 1..=n).collect::<Vec<_>>()[..]);
            prop_assert_eq!(&balanced[m..m + n], &(1..=n).collect::<Vec<_>>()[..]);
            prop_assert_eq!(&balanced[m + n..], &(n + 1..=n + l).collect::<Vec<_>>()[..]);
        } else {
            prop_assert!(balanced_ids(n, m, l).is_err());
        }
    }

    #[test]
    fn checkpoint_entries_round_trip_bitwise(
        shapes in prop::collection::vec((1usize..5, 1usize..5), 1..6),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let entries: Vec<Entry> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| Entry {
                name: format!("tensor{i}"),
                matrix: Matrix::randn(r, c, 1e3, &mut rng),
            })
            .collect();
        let back = decode(&encode(&entries)).unwrap();
        prop_assert_eq!(entries.len(), back.len());
        for (a, b) in entries.iter().zip(&back) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert!(a.matrix.bits_eq(&b.matrix));
        }
    }

    #[test]
    fn config_canonical_form_round_trips(
        seed in any::<u64>(),
        steps in 1usize..5000,
        lr_mantissa in 1u32..999,
        disentangle in any::<bool>(),
    ) {
        let mut run = RunConfig::default();
        run.seed = seed;
        run.train.steps = steps;
        run.train.lr = lr_mantissa as f64 * 1e-5;
        run.model.disentangle = disentangle;
        let back = RunConfig::parse(&run.to_canonical_string()).unwrap();
        prop_assert_eq!(&run, &back);
        prop_assert_eq!(run.config_hash(), back.config_hash());
    }
}

// --- dual-validation inequality against arbitrary answer behavior ----------

struct SeededCoin(rand_chacha::ChaCha12Rng, f64);

impl Answerer for SeededCoin {
    fn answer(
        &mut self,
        _s: &mash_core::harness::dataset::SyntheticSample,
        _p: &mash_core::harness::dataset::QaPair,
    ) -> mash_core::Result<Option<bool>> {
        use rand::Rng;
        Ok(Some(self.0.random::<f64>() < self.1))
    }
}

#[test]
fn dual_accuracy_never_exceeds_marginals() {
    use rand::SeedableRng;
    let gen = GenConfig {
        train_samples: 1,
        test_samples: 36,
        grid_h: 4,
        grid_w: 4,
        enc_dim: 4,
        ..GenConfig::default()
    };
    let test = gen_dataset(&gen, 5).unwrap().test;
    for seed in 0..40u64 {
        let yes_bias = (seed as f64 + 1.0) / 41.0;
        let mut coin = SeededCoin(rand_chacha::ChaCha12Rng::seed_from_u64(seed), yes_bias);
        let out = evaluate_dual(&test, &mut coin).unwrap();
        for (cell, dual) in out.dual.iter().enumerate() {
            let gold = &out.questions[cell * 2];
            let halluc = &out.questions[cell * 2 + 1];
            assert!(dual.dual_acc <= gold.acc + 1e-12);
            assert!(dual.dual_acc <= halluc.acc + 1e-12);
        }
    }
}

#[test]
fn regimes_partition_every_generated_test_split() {
    for (samples, seed) in [(9, 0u64), (10, 7), (11, 123), (30, 42)] {
        let gen = GenConfig {
            train_samples: 2,
            test_samples: samples,
            grid_h: 4,
            grid_w: 4,
            enc_dim: 4,
            ..GenConfig::default()
        };
        let ds = gen_dataset(&gen, seed).unwrap();
        let (u, n, s) = Dataset::regime_counts(&ds.test);
        assert_eq!(u + n + s, samples);
        for sample in &ds.test {
            match sample.regime {
                Regime::Usual => {
                    assert_eq!(sample.action_id, Some(sample.scene_id));
                }
                Regime::Unusual => {
                    assert_ne!(sample.action_id, Some(sample.scene_id));
                    assert!(sample.action_id.is_some());
                }
                Regime::SceneOnly => assert_eq!(sample.action_id, None),
            }
        }
    }
    // The five dual cells cover exactly the regime x category combinations.
    assert_eq!(DUAL_CELLS.len(), 5);
}
