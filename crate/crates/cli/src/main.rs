//! `biclust`: estimation and completion of partially observed matrices with
//! biclustering structure.
//!
//! Subcommands: `generate` (seeded scenario files), `estimate` (constrained
//! least squares fit), `adapt` (unknown cluster numbers / observation rate),
//! `graphon` (sparse graphon experiments), `sweep` (Monte Carlo sweeps).
//! Every subcommand takes an explicit `--seed`; outputs are byte-identical
//! across repeated runs except for wall-clock timing columns.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use biclust_core::adapt::{adaptive_fit_with, estimate_p, KGrid, SELECTION_RESTARTS};
use biclust_core::estimator::{fit, surrogate, FitConfig, FitMode};
use biclust_core::graphon::{
    estimate_graphon, graphon_bandwidth, graphon_mse, graphon_mse_offdiag, sample_graphon_network,
    GraphonSpec,
};
use biclust_core::harness::{rate_report, run_sweep, write_records_csv, SweepConfig};
use biclust_core::io::{
    format_f64, matrix_to_rows, read_json, read_mask_csv, read_matrix_csv, write_atomic,
    write_json_atomic, write_mask_csv, write_matrix_csv, AdaptFile, FitFile, Labels, ModelFile,
    TruthFile, ValidationLosses,
};
use biclust_core::model::{materialize_theta, ModelSpec, ObservedMatrix};
use biclust_core::simulate::{gen_bernoulli, gen_gaussian, gen_mask, gen_random_model};

#[derive(Parser)]
#[command(name = "biclust", version, about = "Biclustered matrix estimation and completion")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random model and observed data (values.csv, mask.csv, truth.json).
    Generate(GenerateArgs),
    /// Fit the constrained least squares estimator (theta_hat.csv, fit.json).
    Estimate(EstimateArgs),
    /// Adaptive fit with cluster-number selection and optional plug-in p
    /// (theta_hat.csv, adapt.json).
    Adapt(AdaptArgs),
    /// Sparse graphon experiment (graphon_results.csv).
    Graphon(GraphonArgs),
    /// Monte Carlo sweep from a JSON config (results.csv, report.json).
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Rectangular mean matrix with Gaussian noise.
    Asymmetric,
    /// Symmetric mean matrix with zero diagonal, Gaussian noise.
    Symmetric,
    /// Symmetric Bernoulli network (block probabilities in [0, rho]).
    Sbm,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Rows (asymmetric).
    #[arg(long)]
    n1: Option<usize>,
    /// Columns (asymmetric).
    #[arg(long)]
    n2: Option<usize>,
    /// Size (symmetric/sbm).
    #[arg(long)]
    n: Option<usize>,
    /// Row clusters (asymmetric).
    #[arg(long)]
    k1: Option<usize>,
    /// Column clusters (asymmetric).
    #[arg(long)]
    k2: Option<usize>,
    /// Clusters (symmetric/sbm).
    #[arg(long)]
    k: Option<usize>,
    /// Block value bound (gaussian kinds).
    #[arg(long = "M")]
    m: Option<f64>,
    /// Noise level (gaussian kinds).
    #[arg(long)]
    sigma: Option<f64>,
    /// Edge probability bound (sbm).
    #[arg(long)]
    rho: Option<f64>,
    /// Observation rate in (0, 1].
    #[arg(long)]
    p: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    values: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Observation rate in (0, 1].
    #[arg(long)]
    p: f64,
    /// Row clusters (with --k2).
    #[arg(long, conflicts_with = "k")]
    k1: Option<usize>,
    /// Column clusters (with --k1).
    #[arg(long, conflicts_with = "k")]
    k2: Option<usize>,
    /// Clusters for a symmetric fit (requires --symmetric).
    #[arg(long, requires = "symmetric")]
    k: Option<usize>,
    #[arg(long)]
    symmetric: bool,
    /// Block value bound.
    #[arg(long = "M")]
    m: f64,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    seed: u64,
    /// Exhaustive solver instead of alternating minimization.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    values: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Observation rate; omit to use the plug-in estimate.
    #[arg(long)]
    p: Option<f64>,
    /// Block value bound.
    #[arg(long = "M")]
    m: f64,
    /// Selection grid {1..kmax} per side (default: min(n, ceil(2*sqrt(n)))).
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    symmetric: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GraphonArgs {
    /// Graphon zoo member: constant|bilinear|smooth|holder.
    #[arg(long = "f")]
    f: String,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description (JSON mirroring the SweepConfig schema).
    #[arg(long)]
    config: PathBuf,
    /// Per-trial records CSV.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Summary statistics JSON.
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        biclust_core::exec::configure_threads(threads);
    }
    let result = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Estimate(args) => estimate(args),
        Command::Adapt(args) => adapt(args),
        Command::Graphon(args) => graphon(args),
        Command::Sweep(args) => sweep(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Missing/inconsistent flag combinations are usage errors (exit 2), same as
/// clap's own.
fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
        .exit()
}

fn require<T>(opt: Option<T>, flag: &str, kind: &str) -> T {
    match opt {
        Some(v) => v,
        None => usage_error(&format!("--{flag} is required for --kind {kind}")),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    // Seed layout: model seed, mask seed + 1, data seed + 2.
    let (spec, sigma) = match args.kind {
        Kind::Asymmetric => {
            let spec = ModelSpec::Asymmetric {
                n1: require(args.n1, "n1", "asymmetric"),
                n2: require(args.n2, "n2", "asymmetric"),
                k1: require(args.k1, "k1", "asymmetric"),
                k2: require(args.k2, "k2", "asymmetric"),
                bound: require(args.m, "M", "asymmetric"),
            };
            (spec, require(args.sigma, "sigma", "asymmetric"))
        }
        Kind::Symmetric => {
            let spec = ModelSpec::Symmetric {
                n: require(args.n, "n", "symmetric"),
                k: require(args.k, "k", "symmetric"),
                bound: require(args.m, "M", "symmetric"),
            };
            (spec, require(args.sigma, "sigma", "symmetric"))
        }
        Kind::Sbm => {
            let spec = ModelSpec::Sbm {
                n: require(args.n, "n", "sbm"),
                k: require(args.k, "k", "sbm"),
                rho: require(args.rho, "rho", "sbm"),
            };
            (spec, 0.0)
        }
    };
    spec.validate()?;
    let (assignment, q) = gen_random_model(&spec, args.seed)?;
    let theta = materialize_theta(&assignment, &q, &spec)?;
    let (n1, n2) = spec.dims();
    let symmetric = spec.is_symmetric();
    let mask = gen_mask(n1, n2, args.p, symmetric, args.seed.wrapping_add(1))?;
    let x = match args.kind {
        Kind::Sbm => gen_bernoulli(&theta, &mask, true, args.seed.wrapping_add(2))?,
        _ => gen_gaussian(&theta, sigma, &mask, symmetric, args.seed.wrapping_add(2))?,
    };

    std::fs::create_dir_all(&args.out)?;
    write_matrix_csv(&args.out.join("values.csv"), x.values())?;
    write_mask_csv(&args.out.join("mask.csv"), x.mask())?;
    let truth = TruthFile {
        model: ModelFile::new(&spec, &assignment, &q),
        theta: matrix_to_rows(&theta),
    };
    write_json_atomic(&args.out.join("truth.json"), &truth)?;
    Ok(())
}

fn load_observed(values: &Path, mask: &Path, symmetric: bool) -> Result<ObservedMatrix> {
    let values = read_matrix_csv(values).with_context(|| format!("reading {}", values.display()))?;
    let mask = read_mask_csv(mask).with_context(|| format!("reading {}", mask.display()))?;
    Ok(ObservedMatrix::new(values, mask, symmetric)?)
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (k1, k2) = match (args.k, args.k1, args.k2) {
        (Some(k), None, None) => (k, k),
        (None, Some(k1), Some(k2)) => {
            if args.symmetric && k1 != k2 {
                usage_error("--symmetric requires equal cluster counts; use --k");
            }
            (k1, k2)
        }
        _ => usage_error("provide either --k with --symmetric, or both --k1 and --k2"),
    };
    let x = load_observed(&args.values, &args.mask, args.symmetric)?;
    let (n1, n2) = x.dims();
    let spec = if args.symmetric {
        ModelSpec::Symmetric { n: n1, k: k1, bound: args.m }
    } else {
        ModelSpec::Asymmetric { n1, n2, k1, k2, bound: args.m }
    };
    let y = surrogate(&x, args.p)?;
    let config = FitConfig {
        restarts: args.restarts,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        mode: if args.exact { FitMode::Exact } else { FitMode::Alternating },
        ..Default::default()
    };
    let result = fit(&y, &spec, &config)?;

    std::fs::create_dir_all(&args.out)?;
    write_matrix_csv(&args.out.join("theta_hat.csv"), &result.theta_hat)?;
    let fit_file = FitFile {
        objective: result.objective,
        iterations: result.iterations,
        k1,
        k2,
        labels: Labels {
            z1: result.assignment.z1().iter().map(|&l| l + 1).collect(),
            z2: result.assignment.z2().iter().map(|&l| l + 1).collect(),
        },
        q: matrix_to_rows(result.q_hat.q()),
    };
    write_json_atomic(&args.out.join("fit.json"), &fit_file)?;
    Ok(())
}

fn adapt(args: AdaptArgs) -> Result<()> {
    let x = load_observed(&args.values, &args.mask, args.symmetric)?;
    let (n1, n2) = x.dims();
    let p_hat = match args.p {
        Some(p) => p,
        None => estimate_p(x.mask(), args.symmetric)?,
    };
    if p_hat == 0.0 {
        anyhow::bail!("cannot estimate p: zero observed entries");
    }
    let grid = match args.kmax {
        Some(kmax) => KGrid::up_to(kmax.min(n1.min(n2)))?,
        None => KGrid::default_for(n1, n2),
    };
    let config = FitConfig {
        restarts: args.restarts,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        ..Default::default()
    };
    let out =
        adaptive_fit_with(&x, p_hat, args.m, &grid, &config, SELECTION_RESTARTS, args.symmetric)?;

    std::fs::create_dir_all(&args.out)?;
    write_matrix_csv(&args.out.join("theta_hat.csv"), &out.theta_hat)?;
    let adapt_file = AdaptFile {
        k_hat_delta: out.k_hat_delta,
        k_hat_deltac: out.k_hat_delta_c,
        p_hat,
        validation_losses: ValidationLosses {
            delta: out.losses_delta,
            deltac: out.losses_delta_c,
        },
    };
    write_json_atomic(&args.out.join("adapt.json"), &adapt_file)?;
    Ok(())
}

fn graphon(args: GraphonArgs) -> Result<()> {
    let kind = args.f.parse()?;
    let g = GraphonSpec::new(kind, args.rho, args.alpha)?;
    let k = graphon_bandwidth(args.n, args.alpha);
    // Seed layout: trial t samples with seed + 2t (positions, then edges);
    // fit restarts start after the sampling range.
    let sample_span = 2 * args.trials as u64;
    let mut rows = String::from("trial,n,k,mse,seconds\n");
    let mut full_mses = Vec::with_capacity(args.trials);
    let mut offdiag_mses = Vec::with_capacity(args.trials);
    for trial in 0..args.trials {
        let start = Instant::now();
        let sample_seed = args.seed.wrapping_add(2 * trial as u64);
        let (xi, _, x) = sample_graphon_network(&g, args.n, sample_seed)?;
        let fit_seed = args
            .seed
            .wrapping_add(sample_span)
            .wrapping_add((trial * args.restarts) as u64);
        let config = FitConfig { restarts: args.restarts, seed: fit_seed, ..Default::default() };
        let f_hat = estimate_graphon(&x, args.alpha, args.rho, &config, false)?;
        let mse = graphon_mse(&f_hat, &g, &xi)?;
        offdiag_mses.push(graphon_mse_offdiag(&f_hat, &g, &xi)?);
        full_mses.push(mse);
        let seconds = start.elapsed().as_secs_f64();
        rows.push_str(&format!(
            "{trial},{},{k},{},{}\n",
            args.n,
            format_f64(mse),
            format_f64(seconds)
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("graphon_results.csv"), rows.as_bytes())?;
    println!(
        "graphon {} n={} k={k} trials={}: median mse {:.6} (off-diagonal {:.6})",
        args.f,
        args.n,
        args.trials,
        biclust_core::harness::median(&full_mses),
        biclust_core::harness::median(&offdiag_mses),
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let config: SweepConfig =
        read_json(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let records = run_sweep(&config)?;
    write_records_csv(&args.out, &records)?;
    let report = rate_report(&records)?;
    write_json_atomic(&args.report, &report)?;
    println!("{} records -> {}, report -> {}", records.len(), args.out.display(), args.report.display());
    Ok(())
}
