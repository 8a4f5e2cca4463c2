//! Constrained least squares fitting of biclustered mean matrices.
//!
//! Given the inverse-probability-weighted surrogate `Y` and a parameter
//! space, the program is `min ||Y - theta||^2` over all matrices with the
//! declared block structure and entry bound `M`. For fixed labels the optimal
//! block values have a closed form (block means clamped to `[-M, M]`); the
//! label search is combinatorial. Two solvers are provided:
//!
//! - [`exact_fit`] enumerates every labeling, feasible only at oracle scale
//!   (budgeted at [`EXACT_FIT_BUDGET`] assignments);
//! - [`alternating_fit`] runs seeded multi-restart coordinate descent
//!   (Lloyd-style label refinement alternating with the closed-form block
//!   update) and keeps the best restart by objective.
//!
//! Determinism: every tie is broken toward the smallest label / lexicographic
//! order, restart `r` uses seed `config.seed + r`, and restart results are
//! merged in index order, so outputs are identical across thread counts.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{
    materialize_theta, BiclusterAssignment, BlockValueMatrix, ModelSpec, ObservedMatrix,
};

/// Maximum number of label assignments [`exact_fit`] will enumerate.
pub const EXACT_FIT_BUDGET: f64 = 1e7;

/// Which solver a fit should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Alternating,
    Exact,
}

/// Label initialization strategy for [`alternating_fit`] restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    #[default]
    Random,
}

/// Solver settings.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Number of independent restarts (best objective wins).
    pub restarts: usize,
    /// Maximum refinement iterations per restart.
    pub max_iters: usize,
    /// Stop a restart once the absolute objective decrease falls below this.
    pub tol: f64,
    /// Base seed; restart `r` uses `seed + r`.
    pub seed: u64,
    pub init: Init,
    /// Solver selected by the [`fit`] dispatcher.
    pub mode: FitMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iters: 100,
            tol: 1e-9,
            seed: 0,
            init: Init::Random,
            mode: FitMode::Alternating,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// A fitted model: the estimated mean matrix with the labels and block values
/// that produce it, plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Array2<f64>,
    pub assignment: BiclusterAssignment,
    pub q_hat: BlockValueMatrix,
    /// `||Y - theta_hat||^2`.
    pub objective: f64,
    /// Refinement iterations of the winning restart (0 for exact fits).
    pub iterations: usize,
    pub restarts_used: usize,
    /// Per-iteration objective of the winning restart, non-increasing.
    pub trace: Vec<f64>,
}

/// Inverse-probability-weighted surrogate: `Y[i][j] = values[i][j] / p` on
/// observed cells and 0 elsewhere, so `E[Y] = theta` under MCAR sampling.
pub fn surrogate(x: &ObservedMatrix, p: f64) -> Result<Array2<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")));
    }
    // Unobserved entries are stored as 0, so plain scaling implements X*E/p.
    Ok(x.values().mapv(|v| v / p))
}

/// Mean of `y` over each block, with the count of cells contributing to it.
///
/// Symmetric means are accumulated over unordered off-diagonal pairs and
/// mirrored, which makes the result exactly symmetric; the returned counts
/// are ordered-pair counts. Empty blocks get mean 0 and count 0.
pub fn block_means(
    y: &Array2<f64>,
    assignment: &BiclusterAssignment,
    symmetric: bool,
) -> Result<(Array2<f64>, Array2<u64>)> {
    let (n1, n2) = (assignment.n1(), assignment.n2());
    if y.dim() != (n1, n2) {
        return Err(Error::DimensionMismatch(format!(
            "y {:?} vs assignment ({n1}, {n2})",
            y.dim()
        )));
    }
    if symmetric && assignment.z1() != assignment.z2() {
        return Err(Error::InvalidArgument(
            "symmetric block means require identical row and column labels".into(),
        ));
    }
    let (k1, k2) = (assignment.k1(), assignment.k2());
    if symmetric {
        let z = assignment.z1();
        let k = k1;
        let mut sums = Array2::<f64>::zeros((k, k));
        let mut pairs = Array2::<u64>::zeros((k, k));
        for i in 0..n1 {
            for j in (i + 1)..n1 {
                let (a, b) = sorted_pair(z[i], z[j]);
                sums[[a, b]] += y[[i, j]];
                pairs[[a, b]] += 1;
            }
        }
        let mut means = Array2::<f64>::zeros((k, k));
        let mut counts = Array2::<u64>::zeros((k, k));
        for a in 0..k {
            for b in a..k {
                let c = pairs[[a, b]];
                let m = if c > 0 { sums[[a, b]] / c as f64 } else { 0.0 };
                means[[a, b]] = m;
                means[[b, a]] = m;
                // Ordered-pair counts: diagonal blocks see each unordered
                // pair twice, off-diagonal blocks once per orientation.
                if a == b {
                    counts[[a, b]] = 2 * c;
                } else {
                    counts[[a, b]] = c;
                    counts[[b, a]] = c;
                }
            }
        }
        Ok((means, counts))
    } else {
        let (z1, z2) = (assignment.z1(), assignment.z2());
        let mut sums = Array2::<f64>::zeros((k1, k2));
        let mut c1 = vec![0u64; k1];
        let mut c2 = vec![0u64; k2];
        for &a in z1 {
            c1[a] += 1;
        }
        for &b in z2 {
            c2[b] += 1;
        }
        for i in 0..n1 {
            let a = z1[i];
            for j in 0..n2 {
                sums[[a, z2[j]]] += y[[i, j]];
            }
        }
        let mut means = Array2::<f64>::zeros((k1, k2));
        let mut counts = Array2::<u64>::zeros((k1, k2));
        for a in 0..k1 {
            for b in 0..k2 {
                let c = c1[a] * c2[b];
                counts[[a, b]] = c;
                means[[a, b]] = if c > 0 { sums[[a, b]] / c as f64 } else { 0.0 };
            }
        }
        Ok((means, counts))
    }
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Closed-form block update: each mean is pulled back into `[-M, M]`, i.e.
/// `sign(m) * min(|m|, M)`.
pub fn clip_block_values(means: &Array2<f64>, bound: f64) -> Result<BlockValueMatrix> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!("bound M must be > 0, got {bound}")));
    }
    BlockValueMatrix::new(means.mapv(|m| m.clamp(-bound, bound)), bound)
}

/// Squared Frobenius distance `||y - theta||^2` over all entries. Symmetric
/// inputs have zero diagonals, so the sum is equivalently over off-diagonal
/// cells.
pub fn ls_objective(y: &Array2<f64>, theta: &Array2<f64>) -> Result<f64> {
    if y.dim() != theta.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", y.dim(), theta.dim())));
    }
    Ok(y.iter()
        .zip(theta.iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum())
}

/// Optimal block values and mean matrix for fixed labels: clipped block
/// means, which minimize the objective over `Q` in `[-M, M]^{k1 x k2}`.
pub fn fit_given_labels(
    y: &Array2<f64>,
    assignment: &BiclusterAssignment,
    bound: f64,
    symmetric: bool,
) -> Result<(BlockValueMatrix, Array2<f64>)> {
    let (means, _) = block_means(y, assignment, symmetric)?;
    let q = clip_block_values(&means, bound)?;
    let spec = spec_for(assignment, bound, symmetric);
    let theta = materialize_theta(assignment, &q, &spec)?;
    Ok((q, theta))
}

fn spec_for(assignment: &BiclusterAssignment, bound: f64, symmetric: bool) -> ModelSpec {
    if symmetric {
        ModelSpec::Symmetric { n: assignment.n1(), k: assignment.k1(), bound }
    } else {
        ModelSpec::Asymmetric {
            n1: assignment.n1(),
            n2: assignment.n2(),
            k1: assignment.k1(),
            k2: assignment.k2(),
            bound,
        }
    }
}

/// Which side of the assignment a refinement pass updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Rows,
    Columns,
}

/// One Lloyd-style pass: each label moves to the block row (or column) that
/// minimizes its squared residual against `y`, everything else held fixed.
/// Ties go to the smallest label. In the symmetric case the single label
/// vector is updated one index at a time against the current labels (`side`
/// is ignored), excluding diagonal terms.
///
/// The per-coordinate argmin never increases the least squares objective.
pub fn refine_labels(
    y: &Array2<f64>,
    q: &BlockValueMatrix,
    assignment: &BiclusterAssignment,
    side: Side,
    symmetric: bool,
) -> Result<BiclusterAssignment> {
    let (n1, n2) = (assignment.n1(), assignment.n2());
    if y.dim() != (n1, n2) {
        return Err(Error::DimensionMismatch(format!(
            "y {:?} vs assignment ({n1}, {n2})",
            y.dim()
        )));
    }
    let (k1, k2) = (assignment.k1(), assignment.k2());
    if q.dims() != (k1, k2) {
        return Err(Error::DimensionMismatch(format!(
            "q {:?} vs assignment clusters ({k1}, {k2})",
            q.dims()
        )));
    }
    let qv = q.q();

    if symmetric {
        // Gauss-Seidel over indices: scores use the expansion
        //   cost(i, a) = const - sum_b q[a][b] * (2*S_ib - n_b * q[a][b])
        // with S_ib the sum of y over cluster-b neighbors of i (j != i).
        let k = k1;
        let mut z = assignment.z1().to_vec();
        let mut cnt = vec![0f64; k];
        for &a in &z {
            cnt[a] += 1.0;
        }
        let mut s = vec![0f64; k];
        for i in 0..n1 {
            s.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n1 {
                if j != i {
                    s[z[j]] += y[[i, j]];
                }
            }
            let own = z[i];
            let mut best = 0usize;
            let mut best_score = f64::INFINITY;
            for a in 0..k {
                let mut score = 0.0;
                for b in 0..k {
                    // neighbor count excludes i itself
                    let nb = cnt[b] - if b == own { 1.0 } else { 0.0 };
                    let qab = qv[[a, b]];
                    score += qab * (nb * qab - 2.0 * s[b]);
                }
                if score < best_score {
                    best_score = score;
                    best = a;
                }
            }
            if best != own {
                cnt[own] -= 1.0;
                cnt[best] += 1.0;
                z[i] = best;
            }
        }
        BiclusterAssignment::symmetric(z, k)
    } else {
        match side {
            Side::Rows => {
                let z2 = assignment.z2();
                let mut c2 = vec![0f64; k2];
                for &b in z2 {
                    c2[b] += 1.0;
                }
                let mut z1 = Vec::with_capacity(n1);
                let mut s = vec![0f64; k2];
                for i in 0..n1 {
                    s.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..n2 {
                        s[z2[j]] += y[[i, j]];
                    }
                    let mut best = 0usize;
                    let mut best_score = f64::INFINITY;
                    for a in 0..k1 {
                        let mut score = 0.0;
                        for b in 0..k2 {
                            let qab = qv[[a, b]];
                            score += qab * (c2[b] * qab - 2.0 * s[b]);
                        }
                        if score < best_score {
                            best_score = score;
                            best = a;
                        }
                    }
                    z1.push(best);
                }
                BiclusterAssignment::asymmetric(z1, z2.to_vec(), k1, k2)
            }
            Side::Columns => {
                let z1 = assignment.z1();
                let mut c1 = vec![0f64; k1];
                for &a in z1 {
                    c1[a] += 1.0;
                }
                let mut z2 = Vec::with_capacity(n2);
                let mut s = vec![0f64; k1];
                for j in 0..n2 {
                    s.iter_mut().for_each(|v| *v = 0.0);
                    for i in 0..n1 {
                        s[z1[i]] += y[[i, j]];
                    }
                    let mut best = 0usize;
                    let mut best_score = f64::INFINITY;
                    for b in 0..k2 {
                        let mut score = 0.0;
                        for a in 0..k1 {
                            let qab = qv[[a, b]];
                            score += qab * (c1[a] * qab - 2.0 * s[a]);
                        }
                        if score < best_score {
                            best_score = score;
                            best = b;
                        }
                    }
                    z2.push(best);
                }
                BiclusterAssignment::asymmetric(z1.to_vec(), z2, k1, k2)
            }
        }
    }
}

struct Restart {
    assignment: BiclusterAssignment,
    q: BlockValueMatrix,
    theta: Array2<f64>,
    objective: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn run_restart(y: &Array2<f64>, spec: &ModelSpec, config: &FitConfig, seed: u64) -> Result<Restart> {
    let (n1, n2) = spec.dims();
    let (k1, k2) = spec.clusters();
    let symmetric = spec.is_symmetric();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = if symmetric {
        let z: Vec<usize> = (0..n1).map(|_| rng.random_range(0..k1)).collect();
        BiclusterAssignment::symmetric(z, k1)?
    } else {
        let z1: Vec<usize> = (0..n1).map(|_| rng.random_range(0..k1)).collect();
        let z2: Vec<usize> = (0..n2).map(|_| rng.random_range(0..k2)).collect();
        BiclusterAssignment::asymmetric(z1, z2, k1, k2)?
    };

    let (mut q, mut theta) = fit_given_labels(y, &assignment, spec.bound(), symmetric)?;
    let mut objective = ls_objective(y, &theta)?;
    let mut trace = vec![objective];
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        let refined = if symmetric {
            refine_labels(y, &q, &assignment, Side::Rows, true)?
        } else {
            let rows = refine_labels(y, &q, &assignment, Side::Rows, false)?;
            refine_labels(y, &q, &rows, Side::Columns, false)?
        };
        let (q_new, theta_new) = fit_given_labels(y, &refined, spec.bound(), symmetric)?;
        let obj_new = ls_objective(y, &theta_new)?;
        if obj_new > objective {
            // Exact coordinate minimization cannot move uphill; a measured
            // increase is rounding noise at convergence, so stop here.
            debug_assert!(
                obj_new <= objective + 1e-9 * (1.0 + objective.abs()),
                "objective increased beyond rounding: {objective} -> {obj_new}"
            );
            break;
        }
        let decrease = objective - obj_new;
        assignment = refined;
        q = q_new;
        theta = theta_new;
        objective = obj_new;
        trace.push(objective);
        iterations += 1;
        if decrease < config.tol {
            break;
        }
    }

    Ok(Restart { assignment, q, theta, objective, iterations, trace })
}

/// Multi-restart alternating minimization for the constrained least squares
/// program. Within a restart the objective sequence is non-increasing; across
/// restarts the best objective wins, earliest restart on ties.
pub fn alternating_fit(y: &Array2<f64>, spec: &ModelSpec, config: &FitConfig) -> Result<FitResult> {
    spec.validate()?;
    config.validate()?;
    if y.dim() != spec.dims() {
        return Err(Error::DimensionMismatch(format!(
            "y {:?} vs spec dims {:?}",
            y.dim(),
            spec.dims()
        )));
    }
    let outcomes = exec::map_collect(config.restarts, |r| {
        run_restart(y, spec, config, config.seed.wrapping_add(r as u64))
    });
    let mut best: Option<Restart> = None;
    for outcome in outcomes {
        let outcome = outcome?;
        match &best {
            Some(b) if outcome.objective >= b.objective => {}
            _ => best = Some(outcome),
        }
    }
    let best = best.expect("restarts >= 1");
    Ok(FitResult {
        theta_hat: best.theta,
        assignment: best.assignment,
        q_hat: best.q,
        objective: best.objective,
        iterations: best.iterations,
        restarts_used: config.restarts,
        trace: best.trace,
    })
}

/// Exhaustive global minimizer: enumerates every labeling in lexicographic
/// order and keeps the first one attaining the minimal objective. Errors if
/// the assignment count `k1^n1 * k2^n2` (symmetric: `k^n`) exceeds
/// [`EXACT_FIT_BUDGET`].
pub fn exact_fit(y: &Array2<f64>, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    if y.dim() != spec.dims() {
        return Err(Error::DimensionMismatch(format!(
            "y {:?} vs spec dims {:?}",
            y.dim(),
            spec.dims()
        )));
    }
    let (n1, n2) = spec.dims();
    let (k1, k2) = spec.clusters();
    let symmetric = spec.is_symmetric();
    let total = if symmetric {
        (k1 as f64).powi(n1 as i32)
    } else {
        (k1 as f64).powi(n1 as i32) * (k2 as f64).powi(n2 as i32)
    };
    if total > EXACT_FIT_BUDGET {
        return Err(Error::ResourceLimit(format!(
            "exact fit would enumerate {total:.3e} label assignments; budget is {EXACT_FIT_BUDGET:.0e}"
        )));
    }
    let bound = spec.bound();

    let best_labels = if symmetric {
        let mut z = vec![0usize; n1];
        let mut best: Option<(Vec<usize>, f64)> = None;
        loop {
            let obj = objective_for_labels_sym(y, &z, k1, bound);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((z.clone(), obj));
            }
            if !increment(&mut z, k1) {
                break;
            }
        }
        let (z, _) = best.expect("at least one assignment");
        BiclusterAssignment::symmetric(z, k1)?
    } else {
        let mut z1 = vec![0usize; n1];
        let mut best: Option<(Vec<usize>, Vec<usize>, f64)> = None;
        let mut row_sums = Array2::<f64>::zeros((k1, n2));
        loop {
            // For fixed z1, pre-aggregate rows into cluster rows once.
            row_sums.fill(0.0);
            for i in 0..n1 {
                for j in 0..n2 {
                    row_sums[[z1[i], j]] += y[[i, j]];
                }
            }
            let mut c1 = vec![0f64; k1];
            for &a in &z1 {
                c1[a] += 1.0;
            }
            let mut z2 = vec![0usize; n2];
            loop {
                let obj = objective_for_labels_asym(y, &row_sums, &c1, &z2, k1, k2, bound);
                if best.as_ref().is_none_or(|(_, _, b)| obj < *b) {
                    best = Some((z1.clone(), z2.clone(), obj));
                }
                if !increment(&mut z2, k2) {
                    break;
                }
            }
            if !increment(&mut z1, k1) {
                break;
            }
        }
        let (z1, z2, _) = best.expect("at least one assignment");
        BiclusterAssignment::asymmetric(z1, z2, k1, k2)?
    };

    let (q, theta) = fit_given_labels(y, &best_labels, bound, symmetric)?;
    let objective = ls_objective(y, &theta)?;
    Ok(FitResult {
        theta_hat: theta,
        assignment: best_labels,
        q_hat: q,
        objective,
        iterations: 0,
        restarts_used: 0,
        trace: vec![objective],
    })
}

/// Routes to the solver named by `config.mode`.
pub fn fit(y: &Array2<f64>, spec: &ModelSpec, config: &FitConfig) -> Result<FitResult> {
    match config.mode {
        FitMode::Alternating => alternating_fit(y, spec, config),
        FitMode::Exact => exact_fit(y, spec),
    }
}

/// `||Y - theta(z, Q_opt)||^2` via the sufficient statistics
/// `sum Y^2 - sum_ab Q_ab (2 S_ab - N_ab Q_ab)`.
fn objective_for_labels_sym(y: &Array2<f64>, z: &[usize], k: usize, bound: f64) -> f64 {
    let n = z.len();
    let mut sums = Array2::<f64>::zeros((k, k));
    let mut pairs = Array2::<u64>::zeros((k, k));
    let mut sum_y2 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = y[[i, j]];
            let w = y[[j, i]];
            sum_y2 += v * v + w * w;
            let (a, b) = sorted_pair(z[i], z[j]);
            sums[[a, b]] += v;
            pairs[[a, b]] += 1;
        }
    }
    let mut obj = sum_y2;
    for a in 0..k {
        for b in a..k {
            let c = pairs[[a, b]];
            if c == 0 {
                continue;
            }
            // Over ordered pairs the block (a, b) and its mirror contribute
            // jointly 2*C cells with total sum 2*T, for a == b and a < b
            // alike.
            let s = 2.0 * sums[[a, b]];
            let nn = 2.0 * c as f64;
            let q = (sums[[a, b]] / c as f64).clamp(-bound, bound);
            obj += q * (nn * q - 2.0 * s);
        }
    }
    obj
}

fn objective_for_labels_asym(
    y: &Array2<f64>,
    row_sums: &Array2<f64>,
    c1: &[f64],
    z2: &[usize],
    k1: usize,
    k2: usize,
    bound: f64,
) -> f64 {
    let n2 = z2.len();
    let mut s = Array2::<f64>::zeros((k1, k2));
    let mut c2 = vec![0f64; k2];
    for j in 0..n2 {
        let b = z2[j];
        c2[b] += 1.0;
        for a in 0..k1 {
            s[[a, b]] += row_sums[[a, j]];
        }
    }
    let mut obj: f64 = y.iter().map(|v| v * v).sum();
    for a in 0..k1 {
        for b in 0..k2 {
            let c = c1[a] * c2[b];
            if c == 0.0 {
                continue;
            }
            let mean = s[[a, b]] / c;
            let q = mean.clamp(-bound, bound);
            obj += q * (c * q - 2.0 * s[[a, b]]);
        }
    }
    obj
}

/// Advances `z` to the next labeling in lexicographic order; false once
/// exhausted.
fn increment(z: &mut [usize], k: usize) -> bool {
    for idx in (0..z.len()).rev() {
        if z[idx] + 1 < k {
            z[idx] += 1;
            z[idx + 1..].fill(0);
            return true;
        }
        z[idx] = 0;
    }
    false
}
