//! Property tests for the structural invariants: masked-norm identities,
//! generator contracts, split reconstruction, and the optimality identities
//! of the block update.

use biclust_core::adapt::{estimate_p, split_data, KGrid, SELECTION_RESTARTS};
use biclust_core::estimator::{
    alternating_fit, clip_block_values, exact_fit, fit_given_labels, ls_objective, surrogate,
    FitConfig,
};
use biclust_core::io::format_f64;
use biclust_core::model::{
    materialize_theta, restricted_inner, restricted_sq_norm, BiclusterAssignment,
    BlockValueMatrix, ModelSpec, ObservedMatrix,
};
use biclust_core::simulate::{full_mask, gen_gaussian, gen_mask, gen_random_model};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_matrix() -> impl Strategy<Value = Array2<f64>> {
    (1usize..6, 1usize..6).prop_flat_map(|(n1, n2)| {
        proptest::collection::vec(-10.0f64..10.0, n1 * n2)
            .prop_map(move |v| Array2::from_shape_vec((n1, n2), v).unwrap())
    })
}

proptest! {
    #[test]
    fn sq_norm_is_self_inner(a in small_matrix(), seed in 0u64..1000) {
        let (n1, n2) = a.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = Array2::from_shape_fn((n1, n2), |_| rng.random::<f64>() < 0.5);
        let lhs = restricted_sq_norm(&a, &mask).unwrap();
        let rhs = restricted_inner(&a, &a, &mask).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn clip_is_signed_min(m in -5.0f64..5.0, bound in 0.01f64..3.0) {
        let q = clip_block_values(&Array2::from_elem((1, 1), m), bound).unwrap();
        let got = q.q()[[0, 0]];
        let expect = m.signum() * m.abs().min(bound);
        prop_assert_eq!(got, expect);
        prop_assert!(got.abs() <= bound);
    }

    #[test]
    fn float_format_roundtrips(v in proptest::num::f64::NORMAL) {
        let parsed: f64 = format_f64(v).parse().unwrap();
        prop_assert_eq!(parsed.to_bits(), v.to_bits());
    }

    #[test]
    fn mask_is_deterministic_and_structured(n in 2usize..12, seed in 0u64..500) {
        let a = gen_mask(n, n, 0.5, true, seed).unwrap();
        let b = gen_mask(n, n, 0.5, true, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for i in 0..n {
            prop_assert!(!a[[i, i]]);
            for j in 0..n {
                prop_assert_eq!(a[[i, j]], a[[j, i]]);
            }
        }
    }

    #[test]
    fn split_reconstructs_two_surrogates(seed in 0u64..300, p in 0.2f64..1.0) {
        let theta = Array2::from_elem((6, 5), 1.5);
        let mask = gen_mask(6, 5, p, false, seed).unwrap();
        let x = gen_gaussian(&theta, 1.0, &mask, false, seed + 1).unwrap();
        let split = split_data(&x, p, seed + 2).unwrap();
        let y = surrogate(&x, p).unwrap();
        for ((i, j), &v) in y.indexed_iter() {
            prop_assert_eq!(split.y_delta[[i, j]] + split.y_delta_c[[i, j]], 2.0 * v);
            prop_assert_eq!(split.y_delta[[i, j]] * split.y_delta_c[[i, j]], 0.0);
        }
    }

    #[test]
    fn estimate_p_is_exact_rational(n1 in 1usize..10, n2 in 1usize..10, seed in 0u64..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = Array2::from_shape_fn((n1, n2), |_| rng.random::<f64>() < 0.4);
        let count = mask.iter().filter(|&&m| m).count();
        prop_assert_eq!(estimate_p(&mask, false).unwrap(), count as f64 / (n1 * n2) as f64);
    }

    #[test]
    fn materialized_theta_has_block_structure(seed in 0u64..300) {
        let spec = ModelSpec::Asymmetric { n1: 7, n2: 6, k1: 3, k2: 2, bound: 2.0 };
        let (a, q) = gen_random_model(&spec, seed).unwrap();
        let theta = materialize_theta(&a, &q, &spec).unwrap();
        let mut distinct: Vec<u64> = theta.iter().map(|v| v.to_bits()).collect();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert!(distinct.len() <= 6);
    }

    #[test]
    fn symmetric_theta_is_symmetric_with_zero_diagonal(seed in 0u64..300) {
        let spec = ModelSpec::Symmetric { n: 8, k: 3, bound: 1.0 };
        let (a, q) = gen_random_model(&spec, seed).unwrap();
        let theta = materialize_theta(&a, &q, &spec).unwrap();
        for i in 0..8 {
            prop_assert_eq!(theta[[i, i]], 0.0);
            for j in 0..8 {
                prop_assert_eq!(theta[[i, j]], theta[[j, i]]);
            }
        }
    }
}

/// The two program forms differ by the constant `||Y||^2`, so they rank every
/// candidate identically: `||Y - theta||^2 = (||theta||^2 - (2/p)<X, theta>_O) + ||Y||^2`.
#[test]
fn program_forms_agree_on_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..10 {
        let p = 0.7;
        let theta_true = Array2::from_shape_fn((5, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let mask = gen_mask(5, 4, p, false, 100 + trial).unwrap();
        let x = gen_gaussian(&theta_true, 0.5, &mask, false, 200 + trial).unwrap();
        let y = surrogate(&x, p).unwrap();
        let y_norm: f64 = y.iter().map(|v| v * v).sum();

        // candidate set: a handful of random labelings at k1 = k2 = 2
        let mut best9 = (f64::INFINITY, 0usize);
        let mut best8 = (f64::INFINITY, 0usize);
        for c in 0..20 {
            let spec = ModelSpec::Asymmetric { n1: 5, n2: 4, k1: 2, k2: 2, bound: 1.5 };
            let (a, q) = gen_random_model(&spec, 300 + 20 * trial + c).unwrap();
            let theta = materialize_theta(&a, &q, &spec).unwrap();
            let crit9 = ls_objective(&y, &theta).unwrap();
            let ip = restricted_inner(x.values(), &theta, x.mask()).unwrap();
            let theta_norm: f64 = theta.iter().map(|v| v * v).sum();
            let crit8 = theta_norm - 2.0 / p * ip;
            assert!(
                (crit9 - (crit8 + y_norm)).abs() <= 1e-9 * (1.0 + crit9.abs()),
                "criteria differ by non-constant: {crit9} vs {}",
                crit8 + y_norm
            );
            if crit9 < best9.0 {
                best9 = (crit9, c as usize);
            }
            if crit8 < best8.0 {
                best8 = (crit8, c as usize);
            }
        }
        assert_eq!(best9.1, best8.1, "argmins diverged");
    }
}

/// Perturbing both mirrored entries of a symmetric block update never
/// improves the objective: the clipped means are optimal inside the space.
#[test]
fn symmetric_block_update_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let n = 8;
        let y = {
            let mut y = Array2::zeros((n, n));
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = rng.random::<f64>() * 4.0 - 2.0;
                    y[[i, j]] = v;
                    y[[j, i]] = v;
                }
            }
            y
        };
        let spec = ModelSpec::Symmetric { n, k: 3, bound: 1.0 };
        let (a, _) = gen_random_model(&spec, 500 + trial).unwrap();
        let (q, theta) = fit_given_labels(&y, &a, 1.0, true).unwrap();
        let base = ls_objective(&y, &theta).unwrap();
        for aa in 0..3 {
            for bb in aa..3 {
                for delta in [-0.1, -1e-3, 1e-3, 0.1] {
                    let moved = q.q()[[aa, bb]] + delta;
                    if moved.abs() > 1.0 {
                        continue;
                    }
                    let mut q2 = q.q().clone();
                    q2[[aa, bb]] = moved;
                    q2[[bb, aa]] = moved;
                    let q2 = BlockValueMatrix::new(q2, 1.0).unwrap();
                    let theta2 = materialize_theta(&a, &q2, &spec).unwrap();
                    let obj2 = ls_objective(&y, &theta2).unwrap();
                    assert!(obj2 >= base - 1e-12, "perturbation improved: {obj2} < {base}");
                }
            }
        }
    }
}

/// Quick oracle agreement at toy size: the heuristic solver can only sit at
/// or above the exhaustive optimum.
#[test]
fn alternating_never_beats_exact() {
    for trial in 0..5 {
        let spec = ModelSpec::Asymmetric { n1: 5, n2: 5, k1: 2, k2: 2, bound: 2.0 };
        let (a, q) = gen_random_model(&spec, 600 + trial).unwrap();
        let theta = materialize_theta(&a, &q, &spec).unwrap();
        let mask = full_mask(5, 5, false);
        let x = gen_gaussian(&theta, 0.7, &mask, false, 700 + trial).unwrap();
        let y = surrogate(&x, 1.0).unwrap();
        let exact = exact_fit(&y, &spec).unwrap();
        let config = FitConfig { restarts: 16, seed: trial, ..Default::default() };
        let approx = alternating_fit(&y, &spec, &config).unwrap();
        assert!(approx.objective >= exact.objective - 1e-9);
    }
}

/// Selection cost of a wide grid over the oracle grid is bounded by the
/// cross-validation overhead term: over 20 trials,
/// `median(5x5 grid) <= 3 * median(true-k grid) + 10 * (M^2 v sigma^2) * (ln(n1+n2)/p)^2`.
#[test]
fn wide_grid_overhead_is_bounded() {
    let n = 40;
    let sigma = 1.0;
    let m = 3.0;
    let p = 1.0;
    let trials = 20;
    let mut wide = Vec::new();
    let mut oracle = Vec::new();
    for t in 0..trials {
        let z: Vec<usize> = (0..n).map(|i| i * 2 / n).collect();
        let a = BiclusterAssignment::asymmetric(z.clone(), z, 2, 2).unwrap();
        let qv = Array2::from_shape_fn((2, 2), |(r, c)| if r == c { m } else { -m });
        let q = BlockValueMatrix::new(qv, m).unwrap();
        let spec = ModelSpec::Asymmetric { n1: n, n2: n, k1: 2, k2: 2, bound: m };
        let theta = materialize_theta(&a, &q, &spec).unwrap();
        let mask = full_mask(n, n, false);
        let x = gen_gaussian(&theta, sigma, &mask, false, 800 + t).unwrap();
        let cfg = FitConfig { restarts: 16, seed: 900 + t, ..Default::default() };
        let grid5 = KGrid::up_to(5).unwrap();
        let grid_true = KGrid::new(vec![2], vec![2]).unwrap();
        let wide_hat = biclust_core::adapt::adaptive_fit_with(
            &x, p, m, &grid5, &cfg, SELECTION_RESTARTS, false,
        )
        .unwrap();
        let oracle_hat = biclust_core::adapt::adaptive_fit_with(
            &x, p, m, &grid_true, &cfg, SELECTION_RESTARTS, false,
        )
        .unwrap();
        wide.push(ls_objective(&wide_hat.theta_hat, &theta).unwrap());
        oracle.push(ls_objective(&oracle_hat.theta_hat, &theta).unwrap());
    }
    let med = |xs: &[f64]| biclust_core::harness::median(xs);
    let slack = 10.0 * (m * m).max(sigma * sigma) * ((2.0 * n as f64).ln() / p).powi(2);
    let lhs = med(&wide);
    let rhs = 3.0 * med(&oracle) + slack;
    assert!(lhs <= rhs, "wide-grid median {lhs} exceeds bound {rhs}");
    println!("wide-grid median {lhs:.3}, oracle median {:.3}, bound {rhs:.3}", med(&oracle));
}

/// Empty observed set must surface as an error, not a silent zero fit.
#[test]
fn surrogate_of_unobserved_matrix_is_zero() {
    let values = Array2::from_elem((3, 3), 7.0);
    let mask = Array2::from_elem((3, 3), false);
    let x = ObservedMatrix::new(values, mask, false).unwrap();
    let y = surrogate(&x, 0.5).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}
