//! Adaptation procedures: selecting unknown cluster numbers by sample
//! splitting, and replacing an unknown observation rate with its plug-in
//! estimate.
//!
//! The split draws an independent Bernoulli(1/2) coin `T` per cell (per
//! unordered pair, mirrored, in the symmetric case) and forms the two
//! half-sample surrogates `2*X*E*T/p` and `2*X*E*(1-T)/p`. Cluster numbers
//! are chosen per half by validating on the opposite half, and the final
//! estimate is the cross-fitted patchwork: each half's fit fills the cells
//! the other half trained on.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{alternating_fit, fit, surrogate, FitConfig, FitResult};
use crate::exec;
use crate::model::{restricted_sq_norm, ModelSpec, ObservedMatrix};

/// Default restart budget for the per-grid-point fits inside [`select_k`];
/// final fits default to the full [`FitConfig`] budget.
pub const SELECTION_RESTARTS: usize = 8;

/// The two half-sample surrogates and the coin mask that produced them.
///
/// Invariants: the supports of `y_delta` and `y_delta_c` are disjoint, and
/// `y_delta + y_delta_c == 2 * surrogate(x, p)` entrywise and exactly.
#[derive(Debug, Clone)]
pub struct SplitData {
    /// `2*X*E*T/p`
    pub y_delta: Array2<f64>,
    /// `2*X*E*(1-T)/p`
    pub y_delta_c: Array2<f64>,
    /// Cells with `T == 1`.
    pub delta_mask: Array2<bool>,
    pub symmetric: bool,
}

impl SplitData {
    /// Complement of the coin mask; in the symmetric case the diagonal is
    /// excluded from both halves.
    pub fn delta_c_mask(&self) -> Array2<bool> {
        let mut out = self.delta_mask.mapv(|t| !t);
        if self.symmetric {
            for i in 0..out.dim().0 {
                out[[i, i]] = false;
            }
        }
        out
    }

    /// The same split with the roles of the two halves exchanged.
    pub fn swapped(&self) -> SplitData {
        SplitData {
            y_delta: self.y_delta_c.clone(),
            y_delta_c: self.y_delta.clone(),
            delta_mask: self.delta_c_mask(),
            symmetric: self.symmetric,
        }
    }
}

/// Splits the observed data into two half-sample surrogates with an
/// independent Bernoulli(1/2) coin per cell. Deterministic given `seed`.
pub fn split_data(x: &ObservedMatrix, p: f64, seed: u64) -> Result<SplitData> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")));
    }
    let (n1, n2) = x.dims();
    let symmetric = x.is_symmetric();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coin = Array2::from_elem((n1, n2), false);
    if symmetric {
        for i in 0..n1 {
            for j in (i + 1)..n2 {
                let t = rng.random::<f64>() < 0.5;
                coin[[i, j]] = t;
                coin[[j, i]] = t;
            }
        }
    } else {
        for i in 0..n1 {
            for j in 0..n2 {
                coin[[i, j]] = rng.random::<f64>() < 0.5;
            }
        }
    }
    // Unobserved values are stored as 0, so scaling implements X*E.
    let mut y_delta = Array2::zeros((n1, n2));
    let mut y_delta_c = Array2::zeros((n1, n2));
    for ((i, j), &v) in x.values().indexed_iter() {
        let w = 2.0 * v / p;
        if coin[[i, j]] {
            y_delta[[i, j]] = w;
        } else {
            y_delta_c[[i, j]] = w;
        }
    }
    Ok(SplitData { y_delta, y_delta_c, delta_mask: coin, symmetric })
}

/// Candidate cluster numbers for selection. Symmetric selection walks
/// `k1_values` only, pairing each `k` with itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGrid {
    pub k1_values: Vec<usize>,
    pub k2_values: Vec<usize>,
}

impl KGrid {
    pub fn new(k1_values: Vec<usize>, k2_values: Vec<usize>) -> Result<Self> {
        if k1_values.is_empty() || k2_values.is_empty() {
            return Err(Error::InvalidArgument("k grid must be nonempty".into()));
        }
        if k1_values.iter().chain(k2_values.iter()).any(|&k| k == 0) {
            return Err(Error::InvalidArgument("k grid values must be >= 1".into()));
        }
        Ok(Self { k1_values, k2_values })
    }

    /// Square grid `{1, ..., kmax}` on both sides.
    pub fn up_to(kmax: usize) -> Result<Self> {
        let ks: Vec<usize> = (1..=kmax).collect();
        Self::new(ks.clone(), ks)
    }

    /// Default search range `{1, ..., min(n, ceil(2*sqrt(n)))}` per side:
    /// wide enough to cover the graphon-driven choice `k ~ sqrt(n)` with
    /// margin while staying far from the full range `[n]`.
    pub fn default_for(n1: usize, n2: usize) -> Self {
        let cap = |n: usize| ((2.0 * (n as f64).sqrt()).ceil() as usize).clamp(1, n);
        Self {
            k1_values: (1..=cap(n1)).collect(),
            k2_values: (1..=cap(n2)).collect(),
        }
    }

    fn validate_against(&self, n1: usize, n2: usize, symmetric: bool) -> Result<()> {
        let max1 = self.k1_values.iter().max().copied().unwrap_or(0);
        if max1 > n1 {
            return Err(Error::InvalidArgument(format!("grid k1 value {max1} exceeds n1 = {n1}")));
        }
        if !symmetric {
            let max2 = self.k2_values.iter().max().copied().unwrap_or(0);
            if max2 > n2 {
                return Err(Error::InvalidArgument(format!(
                    "grid k2 value {max2} exceeds n2 = {n2}"
                )));
            }
        }
        Ok(())
    }
}

/// Validation loss of one candidate grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionPoint {
    pub k1: usize,
    pub k2: usize,
    pub loss: f64,
}

/// [`select_k`] plus the full grid of validation losses, in grid order.
pub fn select_k_with_losses(
    split: &SplitData,
    grid: &KGrid,
    bound: f64,
    config: &FitConfig,
    symmetric: bool,
) -> Result<(usize, usize, Vec<SelectionPoint>)> {
    let (n1, n2) = split.y_delta.dim();
    grid.validate_against(n1, n2, symmetric)?;
    let holdout = split.delta_c_mask();
    if !holdout.iter().any(|&m| m) {
        // Degenerate split with an empty validation set: fall back to the
        // smallest model rather than comparing empty losses.
        return Ok((1, 1, Vec::new()));
    }
    let pairs: Vec<(usize, usize)> = if symmetric {
        grid.k1_values.iter().map(|&k| (k, k)).collect()
    } else {
        grid.k1_values
            .iter()
            .flat_map(|&k1| grid.k2_values.iter().map(move |&k2| (k1, k2)))
            .collect()
    };
    let evaluated = exec::map_collect(pairs.len(), |idx| -> Result<SelectionPoint> {
        let (k1, k2) = pairs[idx];
        let spec = if symmetric {
            ModelSpec::Symmetric { n: n1, k: k1, bound }
        } else {
            ModelSpec::Asymmetric { n1, n2, k1, k2, bound }
        };
        let fitted = alternating_fit(&split.y_delta, &spec, config)?;
        let residual = &fitted.theta_hat - &split.y_delta_c;
        let loss = restricted_sq_norm(&residual, &holdout)?;
        Ok(SelectionPoint { k1, k2, loss })
    });
    let mut points = Vec::with_capacity(evaluated.len());
    for p in evaluated {
        points.push(p?);
    }
    let best = points
        .iter()
        .min_by(|a, b| {
            (a.loss, a.k1, a.k2)
                .partial_cmp(&(b.loss, b.k1, b.k2))
                .expect("finite losses")
        })
        .expect("nonempty grid");
    Ok((best.k1, best.k2, points))
}

/// Picks the cluster numbers whose half-sample fit best predicts the held-out
/// half: `argmin ||theta_delta(k1, k2) - y_delta_c||^2` over the complement
/// of the coin mask. Ties go to the lexicographically smallest pair.
pub fn select_k(
    split: &SplitData,
    grid: &KGrid,
    bound: f64,
    config: &FitConfig,
    symmetric: bool,
) -> Result<(usize, usize)> {
    let (k1, k2, _) = select_k_with_losses(split, grid, bound, config, symmetric)?;
    Ok((k1, k2))
}

/// Everything [`adaptive_fit_with`] reports beyond the estimate itself.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub theta_hat: Array2<f64>,
    /// Cluster numbers selected for the delta-half fit.
    pub k_hat_delta: (usize, usize),
    /// Cluster numbers selected for the complement-half fit.
    pub k_hat_delta_c: (usize, usize),
    pub losses_delta: Vec<SelectionPoint>,
    pub losses_delta_c: Vec<SelectionPoint>,
}

/// Cross-fitted estimator with per-half selected cluster numbers, exposing
/// the selection diagnostics. Seed derivation from `config.seed`: the coin
/// split uses `seed`, selection fits `seed + 1`, and final fits start where
/// the selection restart seeds end (so no two restarts share a stream).
pub fn adaptive_fit_with(
    x: &ObservedMatrix,
    p: f64,
    bound: f64,
    grid: &KGrid,
    config: &FitConfig,
    selection_restarts: usize,
    symmetric: bool,
) -> Result<AdaptiveOutcome> {
    if symmetric != x.is_symmetric() {
        return Err(Error::InvalidArgument(
            "symmetric flag does not match the observed matrix".into(),
        ));
    }
    let split = split_data(x, p, config.seed)?;
    let swapped = split.swapped();
    let selection_restarts = selection_restarts.max(1);
    let select_cfg = config
        .with_restarts(selection_restarts)
        .with_seed(config.seed.wrapping_add(1));
    let final_cfg = config.with_seed(config.seed.wrapping_add(1 + selection_restarts as u64));

    let (k1d, k2d, losses_delta) = select_k_with_losses(&split, grid, bound, &select_cfg, symmetric)?;
    let (k1c, k2c, losses_delta_c) =
        select_k_with_losses(&swapped, grid, bound, &select_cfg, symmetric)?;

    let (n1, n2) = x.dims();
    let spec_d = spec_for(n1, n2, k1d, k2d, bound, symmetric);
    let spec_c = spec_for(n1, n2, k1c, k2c, bound, symmetric);
    let fit_d = alternating_fit(&split.y_delta, &spec_d, &final_cfg)?;
    let fit_c = alternating_fit(&split.y_delta_c, &spec_c, &final_cfg)?;

    // Patchwork: each half predicts the cells the other half trained on.
    let theta_hat = Array2::from_shape_fn((n1, n2), |(i, j)| {
        if split.delta_mask[[i, j]] {
            fit_c.theta_hat[[i, j]]
        } else {
            fit_d.theta_hat[[i, j]]
        }
    });
    Ok(AdaptiveOutcome {
        theta_hat,
        k_hat_delta: (k1d, k2d),
        k_hat_delta_c: (k1c, k2c),
        losses_delta,
        losses_delta_c,
    })
}

fn spec_for(n1: usize, n2: usize, k1: usize, k2: usize, bound: f64, symmetric: bool) -> ModelSpec {
    if symmetric {
        ModelSpec::Symmetric { n: n1, k: k1, bound }
    } else {
        ModelSpec::Asymmetric { n1, n2, k1, k2, bound }
    }
}

/// Cross-fitted estimate of the mean matrix with cluster numbers selected
/// per half by sample splitting. `config` governs the final fits; selection
/// fits run with the reduced [`SELECTION_RESTARTS`] budget.
pub fn adaptive_fit(
    x: &ObservedMatrix,
    p: f64,
    bound: f64,
    grid: &KGrid,
    config: &FitConfig,
    symmetric: bool,
) -> Result<Array2<f64>> {
    Ok(adaptive_fit_with(x, p, bound, grid, config, SELECTION_RESTARTS, symmetric)?.theta_hat)
}

/// Plug-in observation rate: observed count over `n1*n2`, or over
/// `n(n-1)/2` upper-triangle cells in the symmetric case.
pub fn estimate_p(mask: &Array2<bool>, symmetric: bool) -> Result<f64> {
    let (n1, n2) = mask.dim();
    if symmetric {
        if n1 != n2 {
            return Err(Error::InvalidArgument(format!(
                "symmetric mask must be square, got {n1}x{n2}"
            )));
        }
        let pairs = n1 * n1.saturating_sub(1) / 2;
        if pairs == 0 {
            return Err(Error::InvalidArgument(
                "symmetric p estimate needs n >= 2 (n(n-1) = 0)".into(),
            ));
        }
        let mut count = 0usize;
        for i in 0..n1 {
            for j in (i + 1)..n1 {
                count += usize::from(mask[[i, j]]);
            }
        }
        Ok(count as f64 / pairs as f64)
    } else {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument("p estimate needs a nonempty mask".into()));
        }
        let count = mask.iter().filter(|&&m| m).count();
        Ok(count as f64 / (n1 * n2) as f64)
    }
}

/// Runs the least squares fit with the plug-in rate: `Y = X*E/p_hat`.
pub fn fit_unknown_p(x: &ObservedMatrix, spec: &ModelSpec, config: &FitConfig) -> Result<FitResult> {
    let p_hat = estimate_p(x.mask(), x.is_symmetric())?;
    if p_hat == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot estimate p: zero observed entries".into(),
        ));
    }
    let y = surrogate(x, p_hat)?;
    fit(&y, spec, config)
}
