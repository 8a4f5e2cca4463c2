//! Monte Carlo experiment runner: sweeps over problem sizes, observation
//! rates, cluster counts and noise levels, recording per-trial losses against
//! the realized truth plus the rate-normalized `scaled_loss`.
//!
//! Reproducibility: the seed of a trial is a stable FNV-1a hash of the cell
//! parameters and the trial index (plus the base seed), never of list
//! positions, so reordering sweep lists permutes records without changing
//! them. Within a trial, sub-seeds are derived additively: truth `s`, mask
//! `s+1`, data `s+2`, fit `s+3` (adaptive fits derive their split/selection
//! seeds from `s+3` in turn).

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::adapt::{adaptive_fit, fit_unknown_p, KGrid};
use crate::error::{Error, Result};
use crate::estimator::{fit, ls_objective, surrogate, FitConfig, FitMode};
use crate::exec;
use crate::graphon::{graphon_bandwidth, graphon_mse, sample_graphon_network, GraphonKind, GraphonSpec};
use crate::io::{format_f64, write_atomic};
use crate::model::{
    materialize_theta, BiclusterAssignment, BlockValueMatrix, ModelSpec,
};
use crate::simulate::{gen_bernoulli, gen_gaussian, gen_mask, gen_random_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    GaussianAsym,
    GaussianSym,
    Sbm,
    Graphon,
    Adapt,
    UnknownP,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::GaussianAsym => "gaussian-asym",
            Scenario::GaussianSym => "gaussian-sym",
            Scenario::Sbm => "sbm",
            Scenario::Graphon => "graphon",
            Scenario::Adapt => "adapt",
            Scenario::UnknownP => "unknown-p",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Scenario::GaussianSym | Scenario::Sbm | Scenario::Graphon)
    }
}

/// How the true block values of a trial are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    /// `Q = M` on the diagonal blocks and `-M` off (SBM: `rho` and `rho/5`),
    /// with balanced contiguous labels: a fixed, well-separated truth.
    Separated,
    /// Model drawn by [`gen_random_model`] each trial.
    Random,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        let d = FitConfig::default();
        Self { restarts: d.restarts, max_iters: d.max_iters, tol: d.tol }
    }
}

impl FitOptions {
    fn config(&self, mode: FitMode, seed: u64) -> FitConfig {
        FitConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            mode,
            ..Default::default()
        }
    }
}

/// A sweep: the Cartesian product of the `n`, `p`, `k` and `noise` lists,
/// with `trials` replicates per cell. `noise` is `sigma` for the Gaussian
/// scenarios and `rho` for `sbm`/`graphon`. The `k` list is ignored by the
/// `graphon` scenario (the bandwidth rule sets it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    pub k: Vec<usize>,
    pub noise: Vec<f64>,
    pub trials: usize,
    pub mode: FitMode,
    #[serde(default)]
    pub fit: FitOptions,
    pub base_seed: u64,
    /// Entry bound for the Gaussian scenarios (SBM and graphon use `rho`).
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_truth")]
    pub truth: TruthKind,
    /// Graphon smoothness (graphon scenario only).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Graphon zoo member (graphon scenario only).
    #[serde(default = "default_graphon")]
    pub graphon: GraphonKind,
    /// Selection grid reach for the adapt scenario: `k` in `{1..kmax}` per
    /// side (default 5).
    #[serde(default)]
    pub kmax: Option<usize>,
    /// Magnitude of the true block values, defaulting to the fit bound
    /// (`m`, or `rho` for SBM cells). Keeping the truth well inside the
    /// bound separates the signal scale from the clipping scale.
    #[serde(default)]
    pub signal: Option<f64>,
}

fn default_m() -> f64 {
    1.0
}

fn default_truth() -> TruthKind {
    TruthKind::Separated
}

fn default_alpha() -> f64 {
    1.0
}

fn default_graphon() -> GraphonKind {
    GraphonKind::Smooth
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.p.is_empty() || self.k.is_empty() || self.noise.is_empty() {
            return Err(Error::InvalidArgument("sweep lists must be nonempty".into()));
        }
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.p.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidArgument("sweep p values must lie in (0, 1]".into()));
        }
        if !(self.m > 0.0) {
            return Err(Error::InvalidArgument("m must be > 0".into()));
        }
        Ok(())
    }

    /// Cells in deterministic order: `n` outermost, then `p`, `k`, `noise`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &k in &self.k {
                    for &noise in &self.noise {
                        let bound = if self.scenario == Scenario::Sbm { noise } else { self.m };
                        cells.push(Cell {
                            scenario: self.scenario,
                            n,
                            p,
                            k,
                            noise,
                            m: self.m,
                            mode: self.mode,
                            fit: self.fit,
                            truth: self.truth,
                            alpha: self.alpha,
                            graphon: self.graphon,
                            kmax: self.kmax.unwrap_or(5),
                            signal: self.signal.unwrap_or(bound),
                        });
                    }
                }
            }
        }
        cells
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub scenario: Scenario,
    pub n: usize,
    pub p: f64,
    pub k: usize,
    pub noise: f64,
    pub m: f64,
    pub mode: FitMode,
    pub fit: FitOptions,
    pub truth: TruthKind,
    pub alpha: f64,
    pub graphon: GraphonKind,
    pub kmax: usize,
    pub signal: f64,
}

/// One Monte Carlo replicate. `loss` is `||theta_hat - theta||^2` against
/// the realized truth (graphon scenario: the graphon MSE); `scaled_loss`
/// divides out the expected rate, `loss * p / (k1*k2 + n1*ln k1 + n2*ln k2)`
/// (symmetric: `loss * p / (k^2 + n*ln k)`).
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
    pub p: f64,
    pub sigma: f64,
    pub rho: f64,
    pub m: f64,
    pub mode: FitMode,
    pub seed: u64,
    pub loss: f64,
    pub scaled_loss: f64,
    pub objective: f64,
    pub seconds: f64,
    /// `||theta||^2`, the loss of the all-zero estimator (SBM cells only).
    pub zero_loss: Option<f64>,
}

/// Rate normalization from the high-probability bound: the loss scales like
/// `(M^2 v sigma^2) / p * (k1*k2 + n1*log k1 + n2*log k2)`.
pub fn scaled_loss(loss: f64, p: f64, n1: usize, n2: usize, k1: usize, k2: usize, symmetric: bool) -> f64 {
    let denom = if symmetric {
        (k1 * k1) as f64 + n1 as f64 * (k1 as f64).ln()
    } else {
        (k1 * k2) as f64 + n1 as f64 * (k1 as f64).ln() + n2 as f64 * (k2 as f64).ln()
    };
    loss * p / denom
}

fn separated_labels(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| (i * k / n).min(k - 1)).collect()
}

fn separated_q(k: usize, hi: f64, lo: f64, bound: f64) -> Result<BlockValueMatrix> {
    let q = Array2::from_shape_fn((k, k), |(a, b)| if a == b { hi } else { lo });
    BlockValueMatrix::new(q, bound)
}

fn truth_for(cell: &Cell, symmetric: bool, sbm: bool, seed: u64) -> Result<(ModelSpec, Array2<f64>)> {
    let (n, k) = (cell.n, cell.k);
    let spec = if sbm {
        ModelSpec::Sbm { n, k, rho: cell.noise }
    } else if symmetric {
        ModelSpec::Symmetric { n, k, bound: cell.m }
    } else {
        ModelSpec::Asymmetric { n1: n, n2: n, k1: k, k2: k, bound: cell.m }
    };
    spec.validate()?;
    let signal = cell.signal;
    if signal > spec.bound() || !(signal > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "signal {signal} must lie in (0, {}]",
            spec.bound()
        )));
    }
    let (assignment, q) = match cell.truth {
        TruthKind::Random => {
            // Draw the truth from the (possibly smaller) signal box; the fit
            // still runs over the full class bound.
            let truth_spec = if sbm {
                ModelSpec::Sbm { n, k, rho: signal }
            } else if symmetric {
                ModelSpec::Symmetric { n, k, bound: signal }
            } else {
                ModelSpec::Asymmetric { n1: n, n2: n, k1: k, k2: k, bound: signal }
            };
            let (assignment, q_small) = gen_random_model(&truth_spec, seed)?;
            (assignment, BlockValueMatrix::new(q_small.q().clone(), spec.bound())?)
        }
        TruthKind::Separated => {
            let z = separated_labels(n, k);
            let assignment = if symmetric {
                BiclusterAssignment::symmetric(z, k)?
            } else {
                BiclusterAssignment::asymmetric(z.clone(), z, k, k)?
            };
            let q = if sbm {
                separated_q(k, signal, signal / 5.0, spec.bound())?
            } else {
                separated_q(k, signal, -signal, spec.bound())?
            };
            (assignment, q)
        }
    };
    let theta = materialize_theta(&assignment, &q, &spec)?;
    Ok((spec, theta))
}

/// Runs one replicate of a cell. Deterministic given `(cell, seed)` in every
/// field except the wall-clock `seconds`.
pub fn run_trial(cell: &Cell, seed: u64) -> Result<TrialRecord> {
    let start = Instant::now();
    let scenario = cell.scenario;
    let symmetric = scenario.is_symmetric();
    let (truth_seed, mask_seed, data_seed, fit_seed) =
        (seed, seed.wrapping_add(1), seed.wrapping_add(2), seed.wrapping_add(3));

    let mut sigma = 0.0;
    let mut rho = 0.0;
    let mut zero_loss = None;
    let (k1, k2, m, loss, objective);

    match scenario {
        Scenario::GaussianAsym | Scenario::GaussianSym | Scenario::UnknownP => {
            sigma = cell.noise;
            let (spec, theta) = truth_for(cell, symmetric, false, truth_seed)?;
            let mask = gen_mask(cell.n, cell.n, cell.p, symmetric, mask_seed)?;
            let x = gen_gaussian(&theta, sigma, &mask, symmetric, data_seed)?;
            let config = cell.fit.config(cell.mode, fit_seed);
            let result = if scenario == Scenario::UnknownP {
                fit_unknown_p(&x, &spec, &config)?
            } else {
                let y = surrogate(&x, cell.p)?;
                fit(&y, &spec, &config)?
            };
            loss = ls_objective(&result.theta_hat, &theta)?;
            objective = result.objective;
            (k1, k2) = spec.clusters();
            m = cell.m;
        }
        Scenario::Sbm => {
            rho = cell.noise;
            let (spec, theta) = truth_for(cell, true, true, truth_seed)?;
            let mask = gen_mask(cell.n, cell.n, cell.p, true, mask_seed)?;
            let x = gen_bernoulli(&theta, &mask, true, data_seed)?;
            let y = surrogate(&x, cell.p)?;
            let config = cell.fit.config(cell.mode, fit_seed);
            let result = fit(&y, &spec, &config)?;
            loss = ls_objective(&result.theta_hat, &theta)?;
            objective = result.objective;
            zero_loss = Some(theta.iter().map(|v| v * v).sum());
            (k1, k2) = spec.clusters();
            m = rho;
        }
        Scenario::Graphon => {
            rho = cell.noise;
            let g = GraphonSpec::new(cell.graphon, rho, cell.alpha)?;
            let (xi, _, x) = sample_graphon_network(&g, cell.n, data_seed)?;
            let config = cell.fit.config(FitMode::Alternating, fit_seed);
            let k = graphon_bandwidth(cell.n, cell.alpha);
            let spec = ModelSpec::Symmetric { n: cell.n, k, bound: rho };
            let result = fit(x.values(), &spec, &config)?;
            loss = graphon_mse(&result.theta_hat, &g, &xi)?;
            objective = result.objective;
            (k1, k2) = (k, k);
            m = rho;
        }
        Scenario::Adapt => {
            sigma = cell.noise;
            let (spec, theta) = truth_for(cell, false, false, truth_seed)?;
            let mask = gen_mask(cell.n, cell.n, cell.p, false, mask_seed)?;
            let x = gen_gaussian(&theta, sigma, &mask, false, data_seed)?;
            let grid = KGrid::up_to(cell.kmax.min(cell.n))?;
            let config = cell.fit.config(FitMode::Alternating, fit_seed);
            let theta_hat = adaptive_fit(&x, cell.p, cell.m, &grid, &config, false)?;
            loss = ls_objective(&theta_hat, &theta)?;
            objective = 0.0;
            (k1, k2) = spec.clusters();
            m = cell.m;
        }
    }

    Ok(TrialRecord {
        scenario,
        n1: cell.n,
        n2: cell.n,
        k1,
        k2,
        p: cell.p,
        sigma,
        rho,
        m,
        mode: cell.mode,
        seed,
        loss,
        scaled_loss: scaled_loss(loss, cell.p, cell.n, cell.n, k1, k2, symmetric),
        objective,
        seconds: start.elapsed().as_secs_f64(),
        zero_loss,
    })
}

/// Stable 64-bit FNV-1a over the cell parameters and trial index; the base
/// seed is mixed in last.
pub fn trial_seed(base: u64, cell: &Cell, trial: usize) -> u64 {
    let mut bytes = Vec::with_capacity(96);
    bytes.extend_from_slice(cell.scenario.name().as_bytes());
    for v in [
        cell.n as u64,
        cell.k as u64,
        cell.kmax as u64,
        cell.p.to_bits(),
        cell.noise.to_bits(),
        cell.m.to_bits(),
        cell.signal.to_bits(),
        cell.alpha.to_bits(),
        match cell.mode {
            FitMode::Alternating => 0,
            FitMode::Exact => 1,
        },
        match cell.truth {
            TruthKind::Separated => 0,
            TruthKind::Random => 1,
        },
        cell.fit.restarts as u64,
        cell.fit.max_iters as u64,
        cell.fit.tol.to_bits(),
        trial as u64,
        base,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(cell.graphon.to_string().as_bytes());
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Runs every `(cell, trial)` pair of the sweep, trials in parallel, records
/// in deterministic (cell-order, trial-order) sequence.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let outcomes = exec::map_collect(jobs.len(), |idx| {
        let (c, t) = jobs[idx];
        let cell = &cells[c];
        run_trial(cell, trial_seed(config.base_seed, cell, t))
    });
    let mut records = Vec::with_capacity(outcomes.len());
    for r in outcomes {
        records.push(r?);
    }
    Ok(records)
}

/// Loss-ratio annotation for cells that differ from a baseline only in `p`.
#[derive(Debug, Clone, Serialize)]
pub struct PRatio {
    pub baseline_p: f64,
    /// `median_loss(this cell) / median_loss(baseline cell)`.
    pub observed: f64,
    /// `baseline_p / p`, the ratio a `1/p` rate predicts.
    pub theoretical: f64,
}

/// Zero-estimator comparison for SBM cells.
#[derive(Debug, Clone, Serialize)]
pub struct ZeroComparison {
    pub median_zero_loss: f64,
    pub median_ls_loss: f64,
    pub ls_beats_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
    pub p: f64,
    pub sigma: f64,
    pub rho: f64,
    pub m: f64,
    pub mode: FitMode,
    pub trials: usize,
    pub median_loss: f64,
    pub upper_quartile_loss: f64,
    pub median_scaled_loss: f64,
    pub upper_quartile_scaled_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_ratio: Option<PRatio>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_estimator: Option<ZeroComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub cells: Vec<CellSummary>,
}

#[derive(PartialEq, Clone, Copy)]
struct CellKey {
    scenario: Scenario,
    n1: usize,
    n2: usize,
    k1: usize,
    k2: usize,
    p_bits: u64,
    sigma_bits: u64,
    rho_bits: u64,
    m_bits: u64,
    mode: FitMode,
}

impl CellKey {
    fn of(r: &TrialRecord) -> Self {
        Self {
            scenario: r.scenario,
            n1: r.n1,
            n2: r.n2,
            k1: r.k1,
            k2: r.k2,
            p_bits: r.p.to_bits(),
            sigma_bits: r.sigma.to_bits(),
            rho_bits: r.rho.to_bits(),
            m_bits: r.m.to_bits(),
            mode: r.mode,
        }
    }

    /// Everything except `p`: the grouping for ratio annotations.
    fn p_group(&self) -> Self {
        Self { p_bits: 0, ..*self }
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&q));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Per-cell medians and upper quartiles, plus `1/p` ratio annotations across
/// cells that differ only in `p` and the zero-estimator comparison for SBM
/// cells. Pure function of the records.
pub fn rate_report(records: &[TrialRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("rate report needs at least one record".into()));
    }
    let mut groups: Vec<(CellKey, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let key = CellKey::of(r);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }

    // Baseline per p-group: the cell with the largest p.
    let mut baselines: Vec<(CellKey, f64, f64)> = Vec::new(); // (group key, p, median loss)
    for (key, rs) in &groups {
        let p = f64::from_bits(key.p_bits);
        let med = median(&rs.iter().map(|r| r.loss).collect::<Vec<_>>());
        let gk = key.p_group();
        match baselines.iter_mut().find(|(k, _, _)| *k == gk) {
            Some(entry) if p > entry.1 => {
                entry.1 = p;
                entry.2 = med;
            }
            Some(_) => {}
            None => baselines.push((gk, p, med)),
        }
    }

    let mut cells = Vec::with_capacity(groups.len());
    for (key, rs) in &groups {
        let losses: Vec<f64> = rs.iter().map(|r| r.loss).collect();
        let scaled: Vec<f64> = rs.iter().map(|r| r.scaled_loss).collect();
        let p = f64::from_bits(key.p_bits);
        let median_loss = median(&losses);
        let (baseline_p, baseline_median) = baselines
            .iter()
            .find(|(k, _, _)| *k == key.p_group())
            .map(|(_, bp, bm)| (*bp, *bm))
            .expect("group has a baseline");
        let p_ratio = if p < baseline_p && baseline_median > 0.0 {
            Some(PRatio {
                baseline_p,
                observed: median_loss / baseline_median,
                theoretical: baseline_p / p,
            })
        } else {
            None
        };
        let zero_estimator = if rs.iter().all(|r| r.zero_loss.is_some()) {
            let zeros: Vec<f64> = rs.iter().map(|r| r.zero_loss.unwrap()).collect();
            let median_zero_loss = median(&zeros);
            Some(ZeroComparison {
                median_zero_loss,
                median_ls_loss: median_loss,
                ls_beats_zero: median_loss <= median_zero_loss,
            })
        } else {
            None
        };
        cells.push(CellSummary {
            scenario: rs[0].scenario,
            n1: key.n1,
            n2: key.n2,
            k1: key.k1,
            k2: key.k2,
            p,
            sigma: f64::from_bits(key.sigma_bits),
            rho: f64::from_bits(key.rho_bits),
            m: f64::from_bits(key.m_bits),
            mode: key.mode,
            trials: rs.len(),
            median_loss,
            upper_quartile_loss: quantile(&losses, 0.75),
            median_scaled_loss: median(&scaled),
            upper_quartile_scaled_loss: quantile(&scaled, 0.75),
            p_ratio,
            zero_estimator,
        });
    }
    Ok(Report { cells })
}

/// Writes `results.csv` with the fixed column set. `seconds` is wall-clock
/// time and is the only nondeterministic column.
pub fn write_records_csv(path: &std::path::Path, records: &[TrialRecord]) -> Result<()> {
    let mut buf = String::from(
        "scenario,n1,n2,k1,k2,p,sigma,rho,M,mode,seed,loss,scaled_loss,objective,seconds\n",
    );
    for r in records {
        let mode = match r.mode {
            FitMode::Alternating => "alternating",
            FitMode::Exact => "exact",
        };
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario.name(),
            r.n1,
            r.n2,
            r.k1,
            r.k2,
            format_f64(r.p),
            format_f64(r.sigma),
            format_f64(r.rho),
            format_f64(r.m),
            mode,
            r.seed,
            format_f64(r.loss),
            format_f64(r.scaled_loss),
            format_f64(r.objective),
            format_f64(r.seconds),
        ));
    }
    write_atomic(path, buf.as_bytes())
}
