//! Seeded generators for observation masks, Gaussian and Bernoulli data, and
//! random biclustering models.
//!
//! All randomness comes from `ChaCha8Rng` seeded with an explicit `u64`, so
//! every generator is a pure function of its arguments and seed on every
//! platform. Draw order is part of the contract:
//! - rectangular grids are visited row-major;
//! - symmetric grids are visited over the upper triangle (`i < j`) row-major
//!   and mirrored, leaving the diagonal untouched;
//! - value generators draw one variate per *observed* cell, in visit order.
//!
//! When replicating in parallel, derive per-replicate seeds as
//! `base_seed + replicate_index`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{BiclusterAssignment, BlockValueMatrix, ModelSpec, ObservedMatrix};

/// Noise family attached to a generated scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    Bernoulli,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if let NoiseSpec::Gaussian { sigma } = self {
            if *sigma < 0.0 || !sigma.is_finite() {
                return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// All-observed mask (off-diagonal only when `symmetric`).
pub fn full_mask(n1: usize, n2: usize, symmetric: bool) -> Array2<bool> {
    let mut mask = Array2::from_elem((n1, n2), true);
    if symmetric {
        for i in 0..n1.min(n2) {
            mask[[i, i]] = false;
        }
    }
    mask
}

/// Bernoulli(p) observation mask. In the symmetric case each unordered
/// off-diagonal pair is drawn once and mirrored; the diagonal stays `false`.
pub fn gen_mask(n1: usize, n2: usize, p: f64, symmetric: bool, seed: u64) -> Result<Array2<bool>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")));
    }
    if symmetric && n1 != n2 {
        return Err(Error::InvalidArgument(format!(
            "symmetric mask must be square, got {n1}x{n2}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Array2::from_elem((n1, n2), false);
    if symmetric {
        for i in 0..n1 {
            for j in (i + 1)..n1 {
                let hit = rng.random::<f64>() < p;
                mask[[i, j]] = hit;
                mask[[j, i]] = hit;
            }
        }
    } else {
        for i in 0..n1 {
            for j in 0..n2 {
                mask[[i, j]] = rng.random::<f64>() < p;
            }
        }
    }
    Ok(mask)
}

/// Adds `N(0, sigma^2)` noise to `theta` on the observed cells.
pub fn gen_gaussian(
    theta: &Array2<f64>,
    sigma: f64,
    mask: &Array2<bool>,
    symmetric: bool,
    seed: u64,
) -> Result<ObservedMatrix> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if theta.dim() != mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta {:?} vs mask {:?}",
            theta.dim(),
            mask.dim()
        )));
    }
    let (n1, n2) = theta.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n1, n2));
    if symmetric {
        for i in 0..n1 {
            for j in (i + 1)..n2 {
                if mask[[i, j]] {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = theta[[i, j]] + sigma * z;
                    values[[i, j]] = v;
                    values[[j, i]] = v;
                }
            }
        }
    } else {
        for i in 0..n1 {
            for j in 0..n2 {
                if mask[[i, j]] {
                    let z: f64 = rng.sample(StandardNormal);
                    values[[i, j]] = theta[[i, j]] + sigma * z;
                }
            }
        }
    }
    ObservedMatrix::new(values, mask.clone(), symmetric)
}

/// Draws independent Bernoulli entries with means `theta` on the observed
/// cells. Symmetric output is generated on one triangle and mirrored.
pub fn gen_bernoulli(
    theta: &Array2<f64>,
    mask: &Array2<bool>,
    symmetric: bool,
    seed: u64,
) -> Result<ObservedMatrix> {
    if theta.dim() != mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta {:?} vs mask {:?}",
            theta.dim(),
            mask.dim()
        )));
    }
    if let Some(v) = theta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("Bernoulli mean {v} outside [0, 1]")));
    }
    let (n1, n2) = theta.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n1, n2));
    if symmetric {
        for i in 0..n1 {
            for j in (i + 1)..n2 {
                if mask[[i, j]] {
                    let v = f64::from(rng.random::<f64>() < theta[[i, j]]);
                    values[[i, j]] = v;
                    values[[j, i]] = v;
                }
            }
        }
    } else {
        for i in 0..n1 {
            for j in 0..n2 {
                if mask[[i, j]] {
                    values[[i, j]] = f64::from(rng.random::<f64>() < theta[[i, j]]);
                }
            }
        }
    }
    ObservedMatrix::new(values, mask.clone(), symmetric)
}

/// Draws a random model from the parameter space: labels uniform over the
/// label range (redrawn until every cluster is nonempty) and block values
/// uniform over `[-M, M]` (or `[0, rho]` for the block-probability space),
/// symmetrized where the space requires it.
pub fn gen_random_model(spec: &ModelSpec, seed: u64) -> Result<(BiclusterAssignment, BlockValueMatrix)> {
    spec.validate()?;
    let (n1, n2) = spec.dims();
    let (k1, k2) = spec.clusters();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let z1 = draw_surjective_labels(&mut rng, n1, k1);
    let assignment = if spec.is_symmetric() {
        BiclusterAssignment::symmetric(z1, k1)?
    } else {
        let z2 = draw_surjective_labels(&mut rng, n2, k2);
        BiclusterAssignment::asymmetric(z1, z2, k1, k2)?
    };

    let q = match *spec {
        ModelSpec::Asymmetric { bound, .. } => {
            let q = Array2::from_shape_fn((k1, k2), |_| -bound + 2.0 * bound * rng.random::<f64>());
            BlockValueMatrix::new(q, bound)?
        }
        ModelSpec::Symmetric { bound, .. } => {
            let mut q = Array2::zeros((k1, k1));
            for a in 0..k1 {
                for b in a..k1 {
                    let v = -bound + 2.0 * bound * rng.random::<f64>();
                    q[[a, b]] = v;
                    q[[b, a]] = v;
                }
            }
            BlockValueMatrix::new(q, bound)?
        }
        ModelSpec::Sbm { rho, .. } => {
            let mut q = Array2::zeros((k1, k1));
            for a in 0..k1 {
                for b in a..k1 {
                    let v = rho * rng.random::<f64>();
                    q[[a, b]] = v;
                    q[[b, a]] = v;
                }
            }
            BlockValueMatrix::new(q, rho)?
        }
    };
    Ok((assignment, q))
}

/// Uniform labels over `0..k`, redrawn as a whole until every cluster is hit.
/// Rejection keeps the conditional-uniform law over surjective labelings; it
/// can be slow when `k` approaches `n`.
fn draw_surjective_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k >= 1 && k <= n);
    loop {
        let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        for &l in &z {
            seen[l] = true;
        }
        if seen.iter().all(|&s| s) {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::materialize_theta;

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::Gaussian { sigma: 0.5 }.validate().is_ok());
        assert!(NoiseSpec::Gaussian { sigma: -0.1 }.validate().is_err());
        assert!(NoiseSpec::Bernoulli.validate().is_ok());
    }

    #[test]
    fn mask_p_one_is_full() {
        let m = gen_mask(3, 4, 1.0, false, 1).unwrap();
        assert!(m.iter().all(|&b| b));
        let s = gen_mask(3, 3, 1.0, true, 1).unwrap();
        for i in 0..3 {
            assert!(!s[[i, i]]);
        }
        assert!(s[[0, 1]] && s[[1, 0]]);
    }

    #[test]
    fn mask_rejects_bad_p() {
        assert!(gen_mask(2, 2, 0.0, false, 0).is_err());
        assert!(gen_mask(2, 2, 1.5, false, 0).is_err());
    }

    #[test]
    fn mask_observed_fraction_concentrates() {
        // Binomial concentration: at n = 1000^2 and p = 0.5 the observed
        // fraction sits within 0.05 of p with huge margin (3 sigma ~ 0.0015).
        let m = gen_mask(1000, 1000, 0.5, false, 42).unwrap();
        let frac = m.iter().filter(|&&b| b).count() as f64 / 1e6;
        assert!((frac - 0.5).abs() < 0.05, "fraction {frac}");
    }

    #[test]
    fn mask_symmetric_structure() {
        let m = gen_mask(20, 20, 0.4, true, 7).unwrap();
        for i in 0..20 {
            assert!(!m[[i, i]]);
            for j in 0..20 {
                assert_eq!(m[[i, j]], m[[j, i]]);
            }
        }
    }

    #[test]
    fn gaussian_sigma_zero_is_exact() {
        let theta = Array2::from_elem((4, 5), 2.5);
        let mask = gen_mask(4, 5, 0.6, false, 3).unwrap();
        let x = gen_gaussian(&theta, 0.0, &mask, false, 9).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let expect = if mask[[i, j]] { 2.5 } else { 0.0 };
                assert_eq!(x.values()[[i, j]], expect);
            }
        }
    }

    #[test]
    fn gaussian_moments_concentrate() {
        // CLT at 10^4 draws: mean within 4/sqrt(10^4) = 0.04, variance in
        // [0.9, 1.1] by chi-square concentration.
        let theta = Array2::zeros((100, 100));
        let mask = full_mask(100, 100, false);
        let x = gen_gaussian(&theta, 1.0, &mask, false, 11).unwrap();
        let n = 1e4;
        let mean = x.values().iter().sum::<f64>() / n;
        assert!(mean.abs() < 0.04, "mean {mean}");
        let var = x.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((0.9..=1.1).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_symmetric_mirrors() {
        let theta = Array2::zeros((6, 6));
        let mask = gen_mask(6, 6, 0.8, true, 5).unwrap();
        let x = gen_gaussian(&theta, 1.0, &mask, true, 5).unwrap();
        for i in 0..6 {
            assert_eq!(x.values()[[i, i]], 0.0);
            for j in 0..6 {
                assert_eq!(x.values()[[i, j]], x.values()[[j, i]]);
            }
        }
    }

    #[test]
    fn bernoulli_degenerate_means() {
        let mask = gen_mask(10, 10, 0.5, false, 2).unwrap();
        let zeros = Array2::zeros((10, 10));
        let x = gen_bernoulli(&zeros, &mask, false, 4).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));

        let ones = Array2::from_elem((10, 10), 1.0);
        let x = gen_bernoulli(&ones, &mask, false, 4).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(x.values()[[i, j]], f64::from(mask[[i, j]]));
            }
        }
    }

    #[test]
    fn bernoulli_rejects_bad_mean() {
        let theta = Array2::from_elem((2, 2), 1.2);
        let mask = full_mask(2, 2, false);
        assert!(gen_bernoulli(&theta, &mask, false, 0).is_err());
    }

    #[test]
    fn bernoulli_edge_fraction_concentrates() {
        // Binomial concentration at 10^4 entries: 4 s.e. ~ 0.018 < 0.02.
        let theta = Array2::from_elem((100, 100), 0.3);
        let mask = full_mask(100, 100, false);
        let x = gen_bernoulli(&theta, &mask, false, 13).unwrap();
        let frac = x.values().iter().sum::<f64>() / 1e4;
        assert!((frac - 0.3).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn bernoulli_values_binary_and_masked() {
        let theta = Array2::from_elem((8, 8), 0.5);
        let mask = gen_mask(8, 8, 0.5, true, 3).unwrap();
        let x = gen_bernoulli(&theta, &mask, true, 6).unwrap();
        for ((i, j), &v) in x.values().indexed_iter() {
            assert!(v == 0.0 || v == 1.0);
            if !mask[[i, j]] {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn random_model_single_cluster() {
        let spec = ModelSpec::Symmetric { n: 5, k: 1, bound: 1.0 };
        let (a, q) = gen_random_model(&spec, 17).unwrap();
        assert!(a.z1().iter().all(|&l| l == 0));
        assert_eq!(a.z1(), a.z2());
        let v = q.q()[[0, 0]];
        assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn random_model_sbm_range_and_symmetry() {
        let spec = ModelSpec::Sbm { n: 8, k: 2, rho: 0.5 };
        let (_, q) = gen_random_model(&spec, 23).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((0.0..=0.5).contains(&q.q()[[a, b]]));
                assert_eq!(q.q()[[a, b]], q.q()[[b, a]]);
            }
        }
    }

    #[test]
    fn random_model_deterministic_and_surjective() {
        let spec = ModelSpec::Asymmetric { n1: 9, n2: 7, k1: 3, k2: 2, bound: 2.0 };
        let (a1, q1) = gen_random_model(&spec, 99).unwrap();
        let (a2, q2) = gen_random_model(&spec, 99).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(q1.q(), q2.q());
        for a in 0..3 {
            assert!(a1.z1().contains(&a));
        }
        for b in 0..2 {
            assert!(a1.z2().contains(&b));
        }
    }

    #[test]
    fn random_model_rejects_k_above_n() {
        let spec = ModelSpec::Symmetric { n: 2, k: 3, bound: 1.0 };
        assert!(gen_random_model(&spec, 0).is_err());
    }

    #[test]
    fn generated_scenario_roundtrip() {
        // materialize + gen_gaussian with sigma 0 reproduces theta on the mask
        let spec = ModelSpec::Symmetric { n: 6, k: 2, bound: 1.0 };
        let (a, q) = gen_random_model(&spec, 31).unwrap();
        let theta = materialize_theta(&a, &q, &spec).unwrap();
        let mask = full_mask(6, 6, true);
        let x = gen_gaussian(&theta, 0.0, &mask, true, 31).unwrap();
        assert_eq!(x.values(), &theta);
    }
}
