mod common;

use common::random_graph;
use csna::autograd::{Segments, Tape};
use csna::checkpoint::Checkpoint;
use csna::csbm::predicted_factor;
use csna::diagnostics::{bin_of, concordance_auc, cost_histogram};
use csna::graph::edge_homophily;
use csna::model::{Model, ModelConfig, ModelKind, Variant};
use csna::splits::generate_splits;
use csna::tensor::Tensor;
use csna::trainer::mean_std;
use proptest::prelude::*;

fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &pi) in positive.iter().enumerate() {
        for (j, &pj) in positive.iter().enumerate() {
            if pi && !pj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

fn scored_edges() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0u8..12, any::<bool>()), 2..60)
        .prop_map(|v| v.into_iter().map(|(s, p)| (s as f64 / 11.0, p)).unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segment_softmax_normalizes(
        values in prop::collection::vec(-30.0f64..30.0, 1..40),
        n_seg in 1usize..6,
        seed in any::<u64>(),
    ) {
        let ids: Vec<usize> = (0..values.len()).map(|e| (seed as usize).wrapping_add(e * 7) % n_seg).collect();
        let segs = Segments::new(ids.clone(), n_seg).unwrap();
        let tape = Tape::new();
        let out = tape.segment_softmax(tape.constant(Tensor::column(&values)), &segs).unwrap().value();
        let mut sums = vec![0.0; n_seg];
        for (e, &s) in ids.iter().enumerate() {
            let w = out.get(e, 0);
            prop_assert!(w > 0.0 && w <= 1.0);
            sums[s] += w;
        }
        for (s, total) in sums.iter().enumerate() {
            if ids.contains(&s) {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn splits_partition_the_nodes(n in 3usize..400, k in 1usize..4, seed in any::<u64>()) {
        let set = generate_splits(n, [0.6, 0.2, 0.2], k, seed).unwrap();
        prop_assert_eq!(set.len(), k);
        for split in &set.splits {
            split.validate(n).unwrap();
            let (tr, va, te) = split.sizes();
            prop_assert_eq!(tr, (0.6 * n as f64 + 1e-9).floor() as usize);
            prop_assert_eq!(va, (0.2 * n as f64 + 1e-9).floor() as usize);
            prop_assert_eq!(tr + va + te, n);
        }
        prop_assert_eq!(set, generate_splits(n, [0.6, 0.2, 0.2], k, seed).unwrap());
    }

    #[test]
    fn auc_matches_pair_counting((scores, positive) in scored_edges()) {
        let fast = concordance_auc(&scores, &positive);
        let slow = brute_auc(&scores, &positive);
        prop_assert_eq!(fast.is_some(), slow.is_some());
        if let (Some(a), Some(b)) = (fast, slow) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_is_rank_invariant_and_antisymmetric((scores, positive) in scored_edges()) {
        let Some(base) = concordance_auc(&scores, &positive) else { return Ok(()) };
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert!((concordance_auc(&warped, &positive).unwrap() - base).abs() < 1e-12);
        let flipped: Vec<bool> = positive.iter().map(|p| !p).collect();
        prop_assert!((concordance_auc(&scores, &flipped).unwrap() - (1.0 - base)).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((concordance_auc(&negated, &positive).unwrap() - (1.0 - base)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn histogram_counts_match_a_loop(
        scores in prop::collection::vec(-0.2f64..1.2, 0..80),
        seed in any::<u64>(),
        bins in 2usize..30,
    ) {
        let same: Vec<bool> = (0..scores.len()).map(|e| (seed >> (e % 64)) & 1 == 1).collect();
        let h = cost_histogram(&scores, &same, bins).unwrap();
        prop_assert_eq!(h.edges.len(), bins + 1);
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let hi = (b + 1) as f64 / bins as f64;
            let in_bin = |s: f64| {
                let s = s.clamp(0.0, 1.0);
                (s >= lo && s < hi) || (b == bins - 1 && s == 1.0)
            };
            let count = |want: bool| scores.iter().zip(&same).filter(|(s, t)| **t == want && in_bin(**s)).count();
            prop_assert_eq!(h.same[b], count(true));
            prop_assert_eq!(h.diff[b], count(false));
        }
        prop_assert_eq!(h.same.iter().chain(&h.diff).sum::<usize>(), scores.len());
        for &s in &scores {
            prop_assert!(bin_of(s, bins) < bins);
        }
    }

    #[test]
    fn predicted_factor_properties(
        p in 0.001f64..0.999,
        q in 0.001f64..0.999,
        w_plus in 0.01f64..10.0,
        w_minus in 0.01f64..10.0,
        classes in 2usize..8,
    ) {
        let mean = predicted_factor(p, q, 1.0, 1.0, 2).unwrap();
        prop_assert!((mean - (p - q) / (p + q)).abs() < 1e-12);
        prop_assert!(mean.abs() < 1.0);
        let f = predicted_factor(p, q, w_plus, w_minus, classes).unwrap();
        prop_assert!(f > -1.0 && f < 1.0);
        let margin = w_plus / w_minus - q / p;
        if margin.abs() > 1e-9 {
            prop_assert_eq!(f > 0.0, margin > 0.0);
        }
        let scaled = predicted_factor(p, q, 3.0 * w_plus, 3.0 * w_minus, classes).unwrap();
        prop_assert!((scaled - f).abs() < 1e-12);
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in any::<u64>(), kind in 0usize..3, extended in any::<bool>()) {
        let kind = [ModelKind::Mlp, ModelKind::Gcn, ModelKind::Csna][kind];
        let mut config = ModelConfig::new(kind, 3, 4, 2);
        if extended {
            config.variant = Variant::Extended;
        }
        let model = Model::<f64>::new(config, seed).unwrap();
        let ck = Checkpoint::from_model(&model, seed, "train", 3, 0.5);
        let back: Checkpoint = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        let restored = back.to_model::<f64>().unwrap();
        for ((_, a), (_, b)) in model.params.named().iter().zip(restored.params.named()) {
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(restored.config, config);
    }

    #[test]
    fn homophily_ignores_self_loops_and_relabeling(seed in any::<u64>(), n in 2usize..15) {
        let g = random_graph(n, 2, 3, 0.3, seed);
        let h = edge_homophily(&g);
        prop_assert_eq!(h, edge_homophily(&g.with_self_loops()));
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
        if let Ok(gp) = g.permuted(&perm) {
            prop_assert!((edge_homophily(&gp) - h).abs() < 1e-15);
        }
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn summary_statistics_are_recomputable(values in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let (mean, std) = mean_std(&values);
        let m = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((mean - m).abs() < 1e-12);
        if values.len() == 1 {
            prop_assert_eq!(std, 0.0);
        } else {
            let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
            prop_assert!((std - var.sqrt()).abs() < 1e-12);
        }
    }
}
