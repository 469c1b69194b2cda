//! Random-instance study of the complexity constant `ξ(A, p, q)`: sparse
//! matrices with entries from a folded Gaussian or uniform distribution,
//! uniformly drawn marginals rescaled to a common sum, and the median `ξ`
//! per problem size with a log-log slope fit. Draws whose Sinkhorn run does
//! not converge are discarded and counted.

use crate::balancing::{self, SinkhornConfig};
use crate::model::{BalancingProblem, NonnegMatrix};
use crate::spectral::{complexity_constants, SpectralError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Balancing(#[from] balancing::BalancingError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    FoldedGaussian,
    Uniform,
}

impl EntryDistribution {
    pub fn label(self) -> &'static str {
        match self {
            EntryDistribution::FoldedGaussian => "folded_gaussian",
            EntryDistribution::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    /// Row counts; columns are `m = 2n`.
    pub sizes: Vec<usize>,
    pub distributions: Vec<EntryDistribution>,
    /// Target fraction of zero entries.
    pub sparsity: f64,
    /// Instances per `(size, distribution)` cell.
    pub seeds: usize,
    pub base_seed: u64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 150, 200, 250, 300],
            distributions: vec![EntryDistribution::FoldedGaussian, EntryDistribution::Uniform],
            sparsity: 0.8,
            seeds: 100,
            base_seed: 0,
            tol: 1e-8,
            max_iterations: 100_000,
        }
    }
}

impl BenchSpec {
    fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() || self.distributions.is_empty() || self.seeds == 0 {
            return Err(BenchError::InvalidSpec(
                "sizes, distributions, and seeds must be non-empty".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(BenchError::InvalidSpec(format!(
                "sparsity must lie in [0, 1), got {}",
                self.sparsity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub distribution: EntryDistribution,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub discarded: usize,
    pub median_xi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub distribution: EntryDistribution,
    /// Least-squares slope of `ln median ξ` against `ln n`.
    pub log_log_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    pub slopes: Vec<SlopeFit>,
    pub total_discarded: usize,
}

impl BenchReport {
    /// CSV with one row per `(distribution, n)` cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distribution,n,m,samples,discarded,median_xi\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.distribution.label(),
                cell.n,
                cell.m,
                cell.samples,
                cell.discarded,
                cell.median_xi
            ));
        }
        out
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn instance_seed(base: u64, dist: EntryDistribution, n: usize, seed_idx: usize, attempt: usize) -> u64 {
    let tag = match dist {
        EntryDistribution::FoldedGaussian => 1u64,
        EntryDistribution::Uniform => 2u64,
    };
    splitmix(base ^ splitmix(tag) ^ splitmix(n as u64) ^ splitmix(seed_idx as u64 ^ (attempt as u64) << 32))
}

/// Draws one instance: a Bernoulli sparsity mask (re-drawn until no row or
/// column is empty) over the chosen entry distribution, with marginals from
/// `U(0,1]`. Everything is normalized to the unit-mass convention
/// `ΣA = Σp = Σq = 1` under which the complexity constant is stated; without
/// it the `1/(‖d⁰‖₋∞‖d¹‖₋∞)` term absorbs the mass ratio between `A` and the
/// marginals and its growth in `n` steepens.
pub fn generate_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    distribution: EntryDistribution,
    sparsity: f64,
) -> Result<BalancingProblem, BenchError> {
    let normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let a = loop {
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() >= sparsity {
                    let v = match distribution {
                        EntryDistribution::FoldedGaussian => normal.sample(rng).abs(),
                        EntryDistribution::Uniform => rng.random::<f64>(),
                    };
                    if v > 0.0 {
                        triplets.push((i, j, v));
                    }
                }
            }
        }
        let total: f64 = triplets.iter().map(|t| t.2).sum();
        for t in &mut triplets {
            t.2 /= total;
        }
        match NonnegMatrix::from_triplets(n, m, &triplets) {
            Ok(a) => break a,
            Err(_) => continue, // some row or column emptied; re-mask
        }
    };
    // 1 − U[0,1) lies in (0, 1].
    let p: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let mut q: Vec<f64> = (0..m).map(|_| 1.0 - rng.random::<f64>()).collect();
    let sum_p: f64 = p.iter().sum();
    let sum_q: f64 = q.iter().sum();
    let p: Vec<f64> = p.iter().map(|x| x / sum_p).collect();
    q.iter_mut().for_each(|x| *x /= sum_q);
    Ok(BalancingProblem::new(a, p, q)?)
}

struct CellOutcome {
    xis: Vec<f64>,
    discarded: usize,
}

fn run_cell(spec: &BenchSpec, dist: EntryDistribution, n: usize) -> Result<CellOutcome, BenchError> {
    let m = 2 * n;
    let config = SinkhornConfig::plain()
        .with_tol(spec.tol)
        .with_max_iterations(spec.max_iterations);
    let results: Vec<Result<(f64, usize), BenchError>> = (0..spec.seeds)
        .into_par_iter()
        .map(|seed_idx| {
            let mut discarded = 0usize;
            // Limit-scaling draws are discarded and re-drawn, with a cap so
            // a hostile spec cannot loop forever.
            for attempt in 0..64 {
                let seed = instance_seed(spec.base_seed, dist, n, seed_idx, attempt);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let prob = generate_instance(&mut rng, n, m, dist, spec.sparsity)?;
                let (state, report) = balancing::run(&prob, &config)?;
                if !report.converged() {
                    discarded += 1;
                    continue;
                }
                match complexity_constants(&prob, &state) {
                    Ok(constants) => return Ok((constants.xi_constant, discarded)),
                    Err(SpectralError::NotConverged { .. }) => {
                        discarded += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Err(BenchError::InvalidSpec(format!(
                "cell (n = {n}, {dist:?}) discarded 64 draws in a row"
            )))
        })
        .collect();
    let mut xis = Vec::with_capacity(spec.seeds);
    let mut discarded = 0;
    for r in results {
        let (xi, d) = r?;
        xis.push(xi);
        discarded += d;
    }
    Ok(CellOutcome { xis, discarded })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / k;
    let cov: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    cov / var
}

/// Runs the full study. Seeds fan out across worker threads; results are
/// assembled in seed order, so reports are byte-identical across runs with
/// the same spec.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    let mut total_discarded = 0;
    for &dist in &spec.distributions {
        let mut points = Vec::new();
        for &n in &spec.sizes {
            let mut outcome = run_cell(spec, dist, n)?;
            let median_xi = median(&mut outcome.xis);
            total_discarded += outcome.discarded;
            points.push(((n as f64).ln(), median_xi.ln()));
            cells.push(BenchCell {
                distribution: dist,
                n,
                m: 2 * n,
                samples: spec.seeds,
                discarded: outcome.discarded,
                median_xi,
            });
        }
        if points.len() >= 2 {
            slopes.push(SlopeFit {
                distribution: dist,
                log_log_slope: least_squares_slope(&points),
            });
        }
    }
    Ok(BenchReport {
        cells,
        slopes,
        total_discarded,
    })
}
