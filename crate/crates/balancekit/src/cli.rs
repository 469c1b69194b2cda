//! Subcommand implementations behind the `balancekit` binary. Each command
//! loads its inputs, dispatches to the library, and emits JSON to stdout or
//! `--out`. Exit codes: 0 success/converged, 1 input error, 2 iteration
//! budget exhausted, 3 overflow (limit scaling suspected), 4 infeasible
//! dataset. `BALANCEKIT_THREADS` caps benchmark parallelism.

use crate::balancing::{self, SinkhornConfig, Termination};
use crate::bench::{BenchSpec, EntryDistribution};
use crate::choice::{self, EstimateConfig, Normalization};
use crate::feasibility;
use crate::io;
use crate::mixture::{self, EmConfig};
use crate::model::BalancingProblem;
use crate::spectral;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_OVERFLOW: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "balancekit",
    about = "Matrix balancing with Sinkhorn's algorithm, Luce choice estimation, and convergence diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a matrix balancing problem given a matrix and target marginals.
    Balance(BalanceArgs),
    /// Estimate a Luce choice model from JSONL observations.
    Estimate(EstimateArgs),
    /// Report feasibility verdicts for a choice dataset.
    Check(CheckArgs),
    /// Solve a balancing problem and report the spectral rate diagnostics.
    Diagnose(DiagnoseArgs),
    /// Fit a mixture of Luce models with EM.
    Mixture(MixtureArgs),
    /// Reproduce the complexity-constant scaling study on random instances.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Plain,
    Normalized,
    Regularized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    /// Scores sum to 1.
    Simplex,
    /// Scores sum to the number of items.
    SumM,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistributionArg {
    FoldedGaussian,
    Uniform,
    Both,
}

#[derive(Args, Debug)]
pub struct BalanceArgs {
    /// Matrix Market coordinate file.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Single-column CSV of target row sums (header `value`).
    #[arg(long)]
    pub row_marginals: PathBuf,
    /// Single-column CSV of target column sums (header `value`).
    #[arg(long)]
    pub col_marginals: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    /// Gamma shape (regularized variant).
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Gamma rate (regularized variant); defaults to the column count.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Record per-iteration history in the report.
    #[arg(long)]
    pub history: bool,
    /// Write the run report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// JSONL choice data: `{"chosen": id, "set": [ids]}` or `{"ranking": [ids]}`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "simplex")]
    pub norm: NormArg,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    /// Estimate the Gamma-prior MAP instead of the MLE.
    #[arg(long)]
    pub regularized: bool,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Gamma rate; defaults to the number of items.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Augment the data with a full choice set carrying this mass per item.
    #[arg(long)]
    pub augment: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub row_marginals: PathBuf,
    #[arg(long)]
    pub col_marginals: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MixtureArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated row counts; columns are 2n.
    #[arg(long, default_value = "50,100,150,200,250,300")]
    pub sizes: String,
    #[arg(long, value_enum, default_value = "both")]
    pub distribution: DistributionArg,
    #[arg(long, default_value_t = 0.8)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Write the per-cell CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Balance(args) => cmd_balance(&args),
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::Mixture(args) => cmd_mixture(&args),
        Command::Bench(args) => cmd_bench(&args),
    }
}

fn fail(err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {err}");
    EXIT_INPUT_ERROR
}

fn emit(out: Option<&Path>, payload: &serde_json::Value) -> Result<(), std::io::Error> {
    let text = format!("{}\n", serde_json::to_string_pretty(payload).expect("serializable"));
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_problem(
    matrix: &Path,
    row_marginals: &Path,
    col_marginals: &Path,
) -> Result<BalancingProblem, String> {
    let a = io::read_matrix_market(matrix).map_err(|e| e.to_string())?;
    let p = io::read_vector_csv(row_marginals).map_err(|e| e.to_string())?;
    let q = io::read_vector_csv(col_marginals).map_err(|e| e.to_string())?;
    BalancingProblem::new(a, p, q).map_err(|e| e.to_string())
}

fn cmd_balance(args: &BalanceArgs) -> i32 {
    let prob = match load_problem(&args.matrix, &args.row_marginals, &args.col_marginals) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let mut config = match args.variant {
        VariantArg::Plain => SinkhornConfig::plain(),
        VariantArg::Normalized => SinkhornConfig::normalized(),
        VariantArg::Regularized => SinkhornConfig::regularized(
            args.alpha,
            args.beta.unwrap_or(prob.n_cols() as f64),
        ),
    };
    config = config.with_tol(args.tol).with_max_iterations(args.max_iters);
    if args.history {
        config = config.with_history();
    }
    let (_, report) = match balancing::run(&prob, &config) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let payload = serde_json::to_value(&report).expect("serializable");
    if emit(args.report.as_deref(), &payload).is_err() {
        return EXIT_INPUT_ERROR;
    }
    match report.termination {
        Termination::Converged => EXIT_OK,
        Termination::MaxIter | Termination::Overflow => {
            let verdict = feasibility::feasibility_verdict(&prob);
            eprintln!(
                "did not converge after {} iterations; feasibility regime: {:?}",
                report.iterations, verdict.regime
            );
            if report.termination == Termination::MaxIter {
                EXIT_MAX_ITER
            } else {
                EXIT_OVERFLOW
            }
        }
    }
}

fn scores_map(est: &choice::LuceEstimate) -> BTreeMap<String, f64> {
    est.item_ids
        .iter()
        .cloned()
        .zip(est.scores.iter().cloned())
        .collect()
}

fn check_payload(reduced: &choice::ReducedDataset) -> Result<serde_json::Value, String> {
    let connectivity =
        feasibility::check_choice_connectivity(reduced).map_err(|e| e.to_string())?;
    let prob = choice::to_balancing_problem(reduced).map_err(|e| e.to_string())?;
    let verdict = feasibility::feasibility_verdict(&prob);
    let equivalence = feasibility::cross_check_equivalence(reduced)
        .ok()
        .map(|r| r.agree);
    Ok(json!({
        "choice": serde_json::to_value(connectivity).expect("serializable"),
        "matrix": serde_json::to_value(&verdict).expect("serializable"),
        "equivalence_agrees": equivalence,
    }))
}

fn cmd_estimate(args: &EstimateArgs) -> i32 {
    let observations = match io::read_choice_jsonl(&args.data) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let mut reduced = match choice::reduce(&observations) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Some(eps) = args.augment {
        reduced = match choice::augment_data(&reduced, eps) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
    }
    let config = EstimateConfig {
        normalization: match args.norm {
            NormArg::Simplex => Normalization::SimplexSum1,
            NormArg::SumM => Normalization::SumM,
        },
        foc_tol: args.tol,
        max_iterations: args.max_iters,
    };
    let result = if args.regularized {
        let beta = args.beta.unwrap_or(reduced.n_items() as f64);
        choice::estimate_regularized(&reduced, args.alpha, beta, &config)
    } else {
        choice::estimate_mle(&reduced, &config)
    };
    match result {
        Ok(est) => {
            let payload = json!({
                "scores": scores_map(&est),
                "log_likelihood": est.log_likelihood,
                "foc_residual": est.foc_residual,
                "iterations": est.iterations,
                "converged": est.converged,
                "normalization": est.normalization,
            });
            if emit(args.out.as_deref(), &payload).is_err() {
                return EXIT_INPUT_ERROR;
            }
            if est.converged {
                EXIT_OK
            } else {
                EXIT_MAX_ITER
            }
        }
        Err(choice::ChoiceError::InfeasibleDataset(msg)) => {
            eprintln!("infeasible dataset: {msg}");
            match check_payload(&reduced) {
                Ok(payload) => {
                    let _ = emit(args.out.as_deref(), &payload);
                    EXIT_INFEASIBLE
                }
                Err(e) => fail(e),
            }
        }
        Err(e @ choice::ChoiceError::NotConverged { .. }) => {
            eprintln!("error: {e}");
            EXIT_MAX_ITER
        }
        Err(e) => fail(e),
    }
}

fn cmd_check(args: &CheckArgs) -> i32 {
    let observations = match io::read_choice_jsonl(&args.data) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let reduced = match choice::reduce(&observations) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match check_payload(&reduced) {
        Ok(payload) => {
            if emit(args.out.as_deref(), &payload).is_err() {
                return EXIT_INPUT_ERROR;
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> i32 {
    let prob = match load_problem(&args.matrix, &args.row_marginals, &args.col_marginals) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match spectral::diagnose(&prob, args.tol, args.max_iters) {
        Ok(report) => {
            let payload = serde_json::to_value(&report).expect("serializable");
            if emit(args.out.as_deref(), &payload).is_err() {
                return EXIT_INPUT_ERROR;
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn cmd_mixture(args: &MixtureArgs) -> i32 {
    let observations = match io::read_choice_jsonl(&args.data) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let reduced = match choice::reduce(&observations) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let config = EmConfig {
        components: args.components,
        seed: args.seed,
        max_rounds: args.max_rounds,
        tol: args.tol,
        init: None,
    };
    match mixture::run_em(&reduced, &config) {
        Ok((model, trace)) => {
            let components: Vec<BTreeMap<String, f64>> = model
                .components
                .iter()
                .map(|s| {
                    reduced
                        .items()
                        .iter()
                        .cloned()
                        .zip(s.iter().cloned())
                        .collect()
                })
                .collect();
            let payload = json!({
                "weights": model.weights,
                "components": components,
                "regularized_components": model.regularized_components,
                "log_likelihood_trace": trace,
            });
            if emit(args.out.as_deref(), &payload).is_err() {
                return EXIT_INPUT_ERROR;
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn parse_sizes(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad size '{s}'"))
        })
        .collect()
}

/// Runs `f` under the thread cap from `BALANCEKIT_THREADS`, when set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("BALANCEKIT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k > 0);
    match cap {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn cmd_bench(args: &BenchArgs) -> i32 {
    let sizes = match parse_sizes(&args.sizes) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let distributions = match args.distribution {
        DistributionArg::FoldedGaussian => vec![EntryDistribution::FoldedGaussian],
        DistributionArg::Uniform => vec![EntryDistribution::Uniform],
        DistributionArg::Both => vec![
            EntryDistribution::FoldedGaussian,
            EntryDistribution::Uniform,
        ],
    };
    let spec = BenchSpec {
        sizes,
        distributions,
        sparsity: args.sparsity,
        seeds: args.seeds,
        base_seed: args.base_seed,
        tol: args.tol,
        ..BenchSpec::default()
    };
    let report = match with_thread_cap(|| crate::bench::run_bench(&spec)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Some(path) = &args.out {
        if let Err(e) = std::fs::write(path, report.to_csv()) {
            return fail(e);
        }
    }
    let payload = serde_json::to_value(&report).expect("serializable");
    if emit(args.summary.as_deref(), &payload).is_err() {
        return EXIT_INPUT_ERROR;
    }
    EXIT_OK
}
