//! Sparse graphon sampling and estimation.
//!
//! A graphon is a symmetric function `f` on `[0,1]^2`; a network of size `n`
//! is sampled by drawing latent positions `xi_i ~ Uniform[0,1]` and edges
//! `X_ij ~ Bernoulli(f(xi_i, xi_j))` independently for `i < j`, with a zero
//! diagonal. The estimator fits a symmetric block model with bandwidth
//! `k = ceil(n^{1/(1 + min(alpha, 1))})` and entry bound `rho`, and reads off
//! `f_hat(xi_i, xi_j) = theta_hat[i][j]`.

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{alternating_fit, FitConfig};
use crate::model::{ModelSpec, ObservedMatrix};
use crate::simulate::{full_mask, gen_bernoulli};

/// Built-in graphon zoo. Each variant is symmetric and maps `[0,1]^2` into
/// `[0, rho]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphonKind {
    /// `f(x, y) = rho / 2`. Infinitely smooth.
    Constant,
    /// `f(x, y) = rho * x * y`. Infinitely smooth, Lipschitz constant `rho`.
    Bilinear,
    /// `f(x, y) = rho * (x^2 + y^2) / 2`. Infinitely smooth; gradient norm
    /// at most `sqrt(2) * rho`.
    Smooth,
    /// `f(x, y) = rho * |x - y|^alpha`, the canonical kink with exact Hoelder
    /// exponent `alpha` (for `alpha < 1`): its seminorm is at most
    /// `2^{alpha/2}`, so the class radius `L = 2.5` covers the whole zoo for
    /// every `rho <= 1`.
    Holder,
}

impl std::str::FromStr for GraphonKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "bilinear" => Ok(Self::Bilinear),
            "smooth" => Ok(Self::Smooth),
            "holder" => Ok(Self::Holder),
            other => Err(Error::InvalidArgument(format!(
                "unknown graphon '{other}' (expected constant|bilinear|smooth|holder)"
            ))),
        }
    }
}

impl std::fmt::Display for GraphonKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Constant => "constant",
            Self::Bilinear => "bilinear",
            Self::Smooth => "smooth",
            Self::Holder => "holder",
        };
        f.write_str(s)
    }
}

/// A graphon from the zoo with its sparsity level `rho`, smoothness `alpha`,
/// and class radius `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphonSpec {
    pub kind: GraphonKind,
    pub rho: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl GraphonSpec {
    pub fn new(kind: GraphonKind, rho: f64, alpha: f64) -> Result<Self> {
        let spec = Self { kind, rho, alpha, radius: 2.5 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// Evaluates `f(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            GraphonKind::Constant => self.rho / 2.0,
            GraphonKind::Bilinear => self.rho * x * y,
            GraphonKind::Smooth => self.rho * (x * x + y * y) / 2.0,
            GraphonKind::Holder => self.rho * (x - y).abs().powf(self.alpha),
        }
    }

    /// `integral of f over [0,1]^2`, the expected edge density.
    pub fn mean_density(&self) -> f64 {
        match self.kind {
            GraphonKind::Constant => self.rho / 2.0,
            GraphonKind::Bilinear => self.rho / 4.0,
            GraphonKind::Smooth => self.rho / 3.0,
            GraphonKind::Holder => {
                2.0 * self.rho / ((self.alpha + 1.0) * (self.alpha + 2.0))
            }
        }
    }
}

/// Samples a network of size `n`: latent positions, the mean matrix
/// `theta[i][j] = f(xi_i, xi_j)` with zero diagonal, and the adjacency
/// matrix. Positions use `seed`, edges use `seed + 1`.
pub fn sample_graphon_network(
    g: &GraphonSpec,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, Array2<f64>, ObservedMatrix)> {
    sample_graphon_network_with(g, n, seed, |rng| rng.random::<f64>())
}

/// [`sample_graphon_network`] with a custom latent-position sampler in place
/// of Uniform[0,1]; the sampler must return values in `[0, 1]`.
pub fn sample_graphon_network_with(
    g: &GraphonSpec,
    n: usize,
    seed: u64,
    mut xi_sampler: impl FnMut(&mut dyn RngCore) -> f64,
) -> Result<(Vec<f64>, Array2<f64>, ObservedMatrix)> {
    g.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("graphon sampling needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<f64> = (0..n).map(|_| xi_sampler(&mut rng)).collect();
    if let Some(bad) = xi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("latent position {bad} outside [0, 1]")));
    }
    let mut theta = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = g.eval(xi[i], xi[j]);
            theta[[i, j]] = v;
            theta[[j, i]] = v;
        }
    }
    let x = gen_bernoulli(&theta, &full_mask(n, n, true), true, seed.wrapping_add(1))?;
    Ok((xi, theta, x))
}

/// Block-model bandwidth `k = ceil(n^{1/(1 + min(alpha, 1))})`, clamped to
/// `[1, n]`. Non-decreasing in `n`; non-increasing in `alpha` up to the cap
/// at `alpha = 1`.
pub fn graphon_bandwidth(n: usize, alpha: f64) -> usize {
    debug_assert!(n >= 1 && alpha > 0.0);
    let exponent = 1.0 / (1.0 + alpha.min(1.0));
    let raw = (n as f64).powf(exponent);
    // Guard the exact powers (e.g. 64^{2/3} = 16) against one-ulp overshoot.
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.ceil() };
    (k as usize).clamp(1, n)
}

/// Estimates the graphon at the sampled points by fitting a symmetric block
/// model with the bandwidth rule, `M = rho`, and `Y = X` (full observation).
/// With `normalized` the output is divided by `rho`, matching the convention
/// where the graphon integrates to one and the means are `rho * f`.
pub fn estimate_graphon(
    x: &ObservedMatrix,
    alpha: f64,
    rho: f64,
    config: &FitConfig,
    normalized: bool,
) -> Result<Array2<f64>> {
    if !x.is_symmetric() {
        return Err(Error::InvalidArgument(
            "graphon estimation requires a symmetric network".into(),
        ));
    }
    let (n, _) = x.dims();
    let expected = n * n.saturating_sub(1);
    if x.observed_count() != expected {
        return Err(Error::InvalidArgument(
            "graphon estimation requires a fully observed network".into(),
        ));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
    }
    let k = graphon_bandwidth(n, alpha);
    let spec = ModelSpec::Symmetric { n, k, bound: rho };
    let fit = alternating_fit(x.values(), &spec, config)?;
    if normalized {
        Ok(fit.theta_hat.mapv(|v| v / rho))
    } else {
        Ok(fit.theta_hat)
    }
}

/// Mean squared error of `f_hat` against the graphon at the sampled points:
/// `(1/n^2) * sum_{i,j} (f_hat[i][j] - f(xi_i, xi_j))^2`, diagonal included
/// (the estimator pins `f_hat[i][i] = 0` while `f(xi_i, xi_i)` is the true
/// function value).
pub fn graphon_mse(f_hat: &Array2<f64>, g: &GraphonSpec, xi: &[f64]) -> Result<f64> {
    let n = xi.len();
    if f_hat.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "f_hat {:?} vs {n} sampled points",
            f_hat.dim()
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = f_hat[[i, j]] - g.eval(xi[i], xi[j]);
            sum += d * d;
        }
    }
    Ok(sum / (n * n) as f64)
}

/// [`graphon_mse`] restricted to off-diagonal cells (still normalized by
/// `n^2`), sidestepping the diagonal convention mismatch.
pub fn graphon_mse_offdiag(f_hat: &Array2<f64>, g: &GraphonSpec, xi: &[f64]) -> Result<f64> {
    let n = xi.len();
    if f_hat.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "f_hat {:?} vs {n} sampled points",
            f_hat.dim()
        )));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = f_hat[[i, j]] - g.eval(xi[i], xi[j]);
                sum += d * d;
            }
        }
    }
    Ok(sum / (n * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_graphon_theta() {
        let g = GraphonSpec::new(GraphonKind::Constant, 0.6, 1.0).unwrap();
        let (_, theta, _) = sample_graphon_network(&g, 5, 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 0.0 } else { 0.3 };
                assert_eq!(theta[[i, j]], expect);
            }
        }
    }

    #[test]
    fn bilinear_theta_matches_positions() {
        let g = GraphonSpec::new(GraphonKind::Bilinear, 0.8, 1.0).unwrap();
        let (xi, theta, _) = sample_graphon_network(&g, 6, 2).unwrap();
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert_eq!(theta[[i, j]], 0.8 * xi[i] * xi[j]);
                assert_eq!(theta[[j, i]], theta[[i, j]]);
            }
        }
    }

    #[test]
    fn edge_density_matches_integral() {
        // The shared latent positions dominate the fluctuation of a single
        // network's density (sd ~ 0.02 at n = 200), so average over ten
        // independent networks: 4 s.e. is then about 0.027.
        let g = GraphonSpec::new(GraphonKind::Smooth, 1.0, 1.0).unwrap();
        let n = 200;
        let mut total = 0.0;
        let reps = 10;
        for rep in 0..reps {
            let (_, _, x) = sample_graphon_network(&g, n, 7 + rep).unwrap();
            total += x.values().iter().sum::<f64>() / (n * (n - 1)) as f64;
        }
        let density = total / reps as f64;
        assert!((density - g.mean_density()).abs() < 0.03, "density {density}");
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(graphon_bandwidth(100, 1.0), 10);
        assert_eq!(graphon_bandwidth(100, 5.0), 10);
        assert_eq!(graphon_bandwidth(64, 0.5), 16);
        assert_eq!(graphon_bandwidth(1, 1.0), 1);
    }

    #[test]
    fn bandwidth_monotonicity() {
        let mut prev = 0;
        for n in [10, 20, 40, 80, 160, 320] {
            let k = graphon_bandwidth(n, 1.0);
            assert!(k >= prev);
            prev = k;
        }
        let mut prev = usize::MAX;
        for alpha in [0.25, 0.5, 0.75, 1.0, 2.0] {
            let k = graphon_bandwidth(120, alpha);
            assert!(k <= prev, "k not non-increasing in alpha");
            prev = k;
        }
        assert_eq!(graphon_bandwidth(120, 1.0), graphon_bandwidth(120, 3.0));
    }

    #[test]
    fn estimate_constant_graphon_concentrates() {
        // Per-entry error tracks sqrt((k^2 + n log k)/n^2) (~0.2 at n = 80,
        // ~0.15 at n = 160), so the median deviation shrinks with n.
        let median_dev = |n: usize, seed: u64| {
            let g = GraphonSpec::new(GraphonKind::Constant, 0.6, 1.0).unwrap();
            let (_, _, x) = sample_graphon_network(&g, n, seed).unwrap();
            let cfg = FitConfig { restarts: 8, seed: 4, ..Default::default() };
            let f_hat = estimate_graphon(&x, 1.0, 0.6, &cfg, false).unwrap();
            let mut devs: Vec<f64> = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        devs.push((f_hat[[i, j]] - 0.3).abs());
                    }
                }
            }
            devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            devs[devs.len() / 2]
        };
        let coarse = median_dev(80, 3);
        let fine = median_dev(160, 3);
        assert!(coarse < 0.2, "median deviation {coarse} at n=80");
        assert!(fine < coarse, "no concentration: {fine} vs {coarse}");
    }

    #[test]
    fn estimate_output_contract() {
        let g = GraphonSpec::new(GraphonKind::Smooth, 0.7, 1.0).unwrap();
        let (_, _, x) = sample_graphon_network(&g, 30, 9).unwrap();
        let cfg = FitConfig { restarts: 4, seed: 2, ..Default::default() };
        let f_hat = estimate_graphon(&x, 1.0, 0.7, &cfg, false).unwrap();
        for i in 0..30 {
            assert_eq!(f_hat[[i, i]], 0.0);
            for j in 0..30 {
                assert_eq!(f_hat[[i, j]], f_hat[[j, i]]);
                assert!(f_hat[[i, j]].abs() <= 0.7);
            }
        }
        let normalized = estimate_graphon(&x, 1.0, 0.7, &cfg, true).unwrap();
        assert_eq!(normalized[[0, 1]], f_hat[[0, 1]] / 0.7);
    }

    #[test]
    fn estimate_rejects_asymmetric_input() {
        let values = Array2::zeros((4, 4));
        let mask = crate::simulate::full_mask(4, 4, false);
        let x = ObservedMatrix::new(values, mask, false).unwrap();
        assert!(estimate_graphon(&x, 1.0, 0.5, &FitConfig::default(), false).is_err());
    }

    #[test]
    fn mse_exact_fit_is_zero() {
        // Holder graphon vanishes on the diagonal, so the truth matrix is an
        // exact fixed point of the loss.
        let g = GraphonSpec::new(GraphonKind::Holder, 0.9, 0.5).unwrap();
        let (xi, theta, _) = sample_graphon_network(&g, 12, 4).unwrap();
        assert_eq!(graphon_mse(&theta, &g, &xi).unwrap(), 0.0);
    }

    #[test]
    fn mse_counting_examples() {
        let n = 10;
        let g = GraphonSpec::new(GraphonKind::Constant, 0.8, 1.0).unwrap();
        let (xi, _, _) = sample_graphon_network(&g, n, 5).unwrap();
        let zero = Array2::zeros((n, n));
        let c = 0.4;
        // off-diagonal cells only: c^2 * n(n-1) / n^2
        let off = graphon_mse_offdiag(&zero, &g, &xi).unwrap();
        let expect = c * c * (n * (n - 1)) as f64 / (n * n) as f64;
        assert!((off - expect).abs() < 1e-12);
        // the constant graphon is also c on the diagonal, so the full MSE
        // picks up the n remaining cells
        let full = graphon_mse(&zero, &g, &xi).unwrap();
        assert!((full - c * c) < 1e-12);
    }

    #[test]
    fn mse_invariant_under_joint_permutation() {
        let g = GraphonSpec::new(GraphonKind::Smooth, 1.0, 1.0).unwrap();
        let n = 8;
        let (xi, theta, _) = sample_graphon_network(&g, n, 6).unwrap();
        let f_hat = theta.mapv(|v| v * 0.9);
        let base = graphon_mse(&f_hat, &g, &xi).unwrap();
        // reverse both the matrix and the positions
        let perm: Vec<usize> = (0..n).rev().collect();
        let xi_p: Vec<f64> = perm.iter().map(|&i| xi[i]).collect();
        let f_p = Array2::from_shape_fn((n, n), |(i, j)| f_hat[[perm[i], perm[j]]]);
        let permuted = graphon_mse(&f_p, &g, &xi_p).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }
}
