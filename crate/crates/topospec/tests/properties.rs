//! Randomized invariants across the library: stochasticity of normalized
//! operators, task-state bounds, metric symmetries, and inversion
//! round-trips.

use nalgebra::DMatrix;
use proptest::prelude::*;
use topospec::drift::{infer_rho_c, ratio_with_correlation, rho_tilde, rho_tilde_corr, KProfile};
use topospec::dynattn::{dyn_transition, DynOperator};
use topospec::graph::{row_normalize, CommGraph};
use topospec::metrics::pairwise_disagreement;
use topospec::sim::{kruskal_wallis, spearman_rank};
use topospec::spectral::successor;
use topospec::task::{round2, tau, Parity, TaskState};

fn adjacency_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..=7).prop_flat_map(|n| {
        proptest::collection::vec(0.0f64..5.0, n * n).prop_map(move |mut entries| {
            // Guarantee a positive entry per row so no row is dead.
            for i in 0..n {
                entries[i * n + i] += 0.1;
            }
            DMatrix::from_row_slice(n, n, &entries)
        })
    })
}

fn state_strategy() -> impl Strategy<Value = TaskState> {
    (-1.0e6f64..1.0e6, any::<bool>(), 1i64..=9).prop_map(|(value, a, level)| {
        TaskState::new(value, if a { Parity::A } else { Parity::B }, level).unwrap()
    })
}

proptest! {
    #[test]
    fn normalized_rows_are_stochastic(adj in adjacency_strategy()) {
        let g = CommGraph::new(adj, None).unwrap();
        let op = row_normalize(&g).unwrap();
        for i in 0..g.n {
            let sum: f64 = op.p.row(i).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(op.p.row(i).iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn successor_rows_sum_to_the_discount_series(adj in adjacency_strategy()) {
        // (I − γP)⁻¹ · 1 = 1/(1−γ) · 1 for any row-stochastic P.
        let g = CommGraph::new(adj, None).unwrap();
        let sr = successor(&row_normalize(&g).unwrap()).unwrap();
        for i in 0..g.n {
            let sum: f64 = sr.m.row(i).sum();
            prop_assert!((sum - 10.0).abs() < 1e-8, "row {} sums to {}", i, sum);
        }
        prop_assert!(sr.rho() >= 1.0 - 1e-12);
        prop_assert!(sr.kappa() >= 1.0 - 1e-12);
        prop_assert!(sr.gap() >= 0.0);
    }

    #[test]
    fn tau_preserves_state_invariants(s in state_strategy()) {
        let out = tau(s);
        prop_assert!((1..=9).contains(&out.level));
        prop_assert!(out.value.is_finite());
        // Values carry at most two decimals after the rounded update.
        prop_assert!((out.value * 100.0 - (out.value * 100.0).round()).abs() < 1e-6);
        // Pure function.
        prop_assert_eq!(tau(s), out);
    }

    #[test]
    fn round2_is_idempotent(x in -1.0e9f64..1.0e9) {
        prop_assert_eq!(round2(round2(x)), round2(x));
    }

    #[test]
    fn disagreement_is_permutation_invariant_and_homogeneous(
        mut values in proptest::collection::vec(-100.0f64..100.0, 2..9),
        scale in 0.01f64..50.0,
    ) {
        let base = pairwise_disagreement(&values).unwrap();
        values.reverse();
        let reversed = pairwise_disagreement(&values).unwrap();
        prop_assert!((base - reversed).abs() < 1e-12);
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let homog = pairwise_disagreement(&scaled).unwrap();
        prop_assert!((homog - scale * base).abs() < 1e-9 * scale.max(1.0));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn correlation_inference_round_trips(k in 2usize..=12, rho_c in 0.0f64..=1.0) {
        let ratio = ratio_with_correlation(k, rho_c);
        prop_assert!(ratio >= 1.0 - 1e-12 && ratio <= (k as f64).sqrt() + 1e-12);
        let back = infer_rho_c(ratio, k).unwrap();
        prop_assert!((back - rho_c).abs() < 1e-9);
    }

    #[test]
    fn corrected_gain_interpolates(
        rho in 0.5f64..20.0,
        counts in proptest::collection::vec(1usize..=9, 1..6),
        rho_c in 0.0f64..=1.0,
    ) {
        let profile = KProfile::new(counts).unwrap();
        let lo = rho_tilde(rho, &profile);
        let hi = rho;
        let mid = rho_tilde_corr(rho, &profile, rho_c);
        prop_assert!(mid >= lo - 1e-12 && mid <= hi + 1e-12);
    }

    #[test]
    fn kruskal_wallis_ignores_within_group_order(
        mut a in proptest::collection::vec(-50.0f64..50.0, 3..8),
        b in proptest::collection::vec(-50.0f64..50.0, 3..8),
    ) {
        let before = kruskal_wallis(&[a.clone(), b.clone()]);
        a.reverse();
        let after = kruskal_wallis(&[a, b]);
        prop_assert!((before.h - after.h).abs() < 1e-10);
        prop_assert_eq!(before.degenerate, after.degenerate);
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(
        distinct in proptest::collection::btree_set(0i32..10_000, 3..8),
        other in proptest::collection::btree_set(0i32..10_000, 3..8),
    ) {
        let n = distinct.len().min(other.len());
        let a: Vec<f64> = distinct.into_iter().take(n).map(f64::from).collect();
        let mut b: Vec<f64> = other.into_iter().take(n).map(f64::from).collect();
        b.reverse();
        let ab = spearman_rank(&a, &b).unwrap();
        let ba = spearman_rank(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        let self_corr = spearman_rank(&a, &a).unwrap();
        prop_assert!((self_corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_rows_are_stochastic_for_any_reliabilities(
        reliabilities in proptest::collection::vec(0.01f64..100.0, 2..7),
        beta in 0.0f64..3.0,
    ) {
        let n = reliabilities.len();
        let op = DynOperator::featureless(
            (0..n).map(|_| (0..n).collect()).collect(),
            reliabilities,
            beta,
        );
        let p = dyn_transition(&op, 0.9).unwrap().p;
        for i in 0..n {
            let sum: f64 = p.row(i).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
