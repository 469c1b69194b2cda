//! Sinkhorn's algorithm for the canonical matrix balancing problem: the plain
//! alternating row/column iteration, the gauge-normalized variant, and the
//! Gamma-prior regularized variant, together with the dual potential and the
//! per-iteration bookkeeping the convergence diagnostics consume.
//!
//! One full iteration is a row half-step `d¹ ← p/(A d⁰)` followed by a column
//! half-step `d⁰ ← q/(Aᵀ d¹)`. Every recorded snapshot states which half-step
//! it follows: row sums `r` and the potential are measured after the column
//! half-step, while the column sums entering the optimality-gap identity are
//! measured mid-iteration, right after the row half-step.

use crate::model::{
    kl_divergence, l1_distance, BalancingProblem, ModelError, ScalingState,
};
use serde::Serialize;
use thiserror::Error;

/// Scaling entries above this threshold terminate a run with
/// [`Termination::Overflow`]; divergence of the scalings is a legitimate
/// outcome in the weak-existence regime, not a crash.
pub const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Error)]
pub enum BalancingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("numeric overflow in {which}[{index}] (scaling exceeded {limit:e})")]
    NumericOverflow {
        which: &'static str,
        index: usize,
        limit: f64,
    },
    #[error("history is missing or too short for this diagnostic: {0}")]
    InsufficientHistory(String),
}

/// Which update rule the solver applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    /// Plain updates followed by the gauge normalization `(d⁰/c, c·d¹)` after
    /// each half-step, keeping `(log d⁰, −log d¹)` orthogonal to the ones
    /// vector. The potential values are identical to the plain variant.
    Normalized,
    /// `d⁰ ← (q + α − 1)/(Aᵀd¹ + β)`; always converges to a finite interior
    /// fixed point, regardless of the existence assumptions.
    Regularized,
}

/// Stopping rule for [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    /// `‖r − p‖₁ + ‖c − q‖₁` after the column half-step. For the regularized
    /// variant only the row term is used, since its fixed point does not have
    /// column sums `q`.
    L1Marginal,
    /// `max |log d_new − log d_old|` over both scaling vectors per full
    /// iteration.
    MaxScalingUpdate,
}

#[derive(Debug, Clone)]
pub struct SinkhornConfig {
    pub variant: Variant,
    /// Gamma shape; used by the regularized variant only (requires `> 1`).
    pub alpha: f64,
    /// Gamma rate; used by the regularized variant only (requires `> 0`).
    pub beta: f64,
    pub max_iterations: usize,
    pub tol: f64,
    pub stop_metric: StopMetric,
    /// Record per-iteration scalar metrics (`g`, marginal errors, KL terms).
    pub record_history: bool,
    /// Additionally keep the full `(d⁰, d¹)` vectors per iteration; required
    /// by the trajectory diagnostics in [`crate::spectral`].
    pub record_scalings: bool,
    /// Starting column scaling; all-ones when absent.
    pub initial_d0: Option<Vec<f64>>,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Plain,
            alpha: 1.0,
            beta: 0.0,
            max_iterations: 100_000,
            tol: 1e-8,
            stop_metric: StopMetric::L1Marginal,
            record_history: false,
            record_scalings: false,
            initial_d0: None,
        }
    }
}

impl SinkhornConfig {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn normalized() -> Self {
        Self {
            variant: Variant::Normalized,
            ..Self::default()
        }
    }

    pub fn regularized(alpha: f64, beta: f64) -> Self {
        Self {
            variant: Variant::Regularized,
            alpha,
            beta,
            stop_metric: StopMetric::MaxScalingUpdate,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }

    pub fn with_scalings(mut self) -> Self {
        self.record_history = true;
        self.record_scalings = true;
        self
    }

    pub fn with_stop_metric(mut self, stop_metric: StopMetric) -> Self {
        self.stop_metric = stop_metric;
        self
    }

    pub fn with_initial_d0(mut self, d0: Vec<f64>) -> Self {
        self.initial_d0 = Some(d0);
        self
    }

    fn validate(&self) -> Result<(), BalancingError> {
        if !(self.tol > 0.0) {
            return Err(BalancingError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.variant == Variant::Regularized && !(self.alpha > 1.0 && self.beta > 0.0) {
            return Err(BalancingError::InvalidConfig(format!(
                "regularized variant requires alpha > 1 and beta > 0, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    Overflow,
}

/// One recorded full iteration. `g` and the row metrics are measured after
/// the column half-step; `kl_col` is `D_KL(q‖c)` with `c` measured after the
/// row half-step of the same iteration (for `t = 0`, at the initial state).
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub t: usize,
    pub g: f64,
    pub l1_row_err: f64,
    pub kl_row: f64,
    pub kl_col: f64,
    #[serde(skip)]
    pub d0: Option<Vec<f64>>,
    #[serde(skip)]
    pub d1: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub variant: Variant,
    pub iterations: usize,
    pub termination: Termination,
    pub final_l1_row_err: f64,
    pub final_l1_col_err: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<IterationRecord>>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn history(&self) -> Result<&[IterationRecord], BalancingError> {
        self.history
            .as_deref()
            .ok_or_else(|| BalancingError::InsufficientHistory("run recorded no history".into()))
    }
}

/// Dual potential evaluated through its two algebraic forms, which agree up
/// to rounding after the change of variables `u = log d⁰`, `v = −log d¹`.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialValue {
    pub g_dual: f64,
    pub g_reparam: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_to_reference: Option<f64>,
}

fn check_overflow(d: &[f64], which: &'static str) -> Result<(), BalancingError> {
    for (i, &x) in d.iter().enumerate() {
        if !x.is_finite() || x > OVERFLOW_LIMIT {
            return Err(BalancingError::NumericOverflow {
                which,
                index: i,
                limit: OVERFLOW_LIMIT,
            });
        }
    }
    Ok(())
}

/// `d¹ ← p/(A d⁰)`; iteration metadata is unchanged (half step).
pub fn sinkhorn_half_step_row(
    prob: &BalancingProblem,
    state: &ScalingState,
) -> Result<ScalingState, BalancingError> {
    let mut next = state.clone();
    let mut a_d0 = vec![0.0; prob.n_rows()];
    prob.matrix().matvec(&next.d0, &mut a_d0);
    for i in 0..prob.n_rows() {
        next.d1[i] = prob.p()[i] / a_d0[i];
    }
    check_overflow(&next.d1, "d1")?;
    Ok(next)
}

/// `d⁰ ← q/(Aᵀ d¹)`; mirror of the row half-step.
pub fn sinkhorn_half_step_col(
    prob: &BalancingProblem,
    state: &ScalingState,
) -> Result<ScalingState, BalancingError> {
    let mut next = state.clone();
    let mut at_d1 = vec![0.0; prob.n_cols()];
    prob.matrix().matvec_t(&next.d1, &mut at_d1);
    for j in 0..prob.n_cols() {
        next.d0[j] = prob.q()[j] / at_d1[j];
    }
    check_overflow(&next.d0, "d0")?;
    Ok(next)
}

/// One regularized update: `d¹ ← p/(A d⁰)` then `d⁰ ← (q + α − 1)/(Aᵀd¹ + β)`.
pub fn regularized_step(
    prob: &BalancingProblem,
    state: &ScalingState,
    alpha: f64,
    beta: f64,
) -> Result<ScalingState, BalancingError> {
    if !(alpha > 1.0 && beta > 0.0) {
        return Err(BalancingError::InvalidConfig(format!(
            "regularized step requires alpha > 1 and beta > 0, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let mut next = sinkhorn_half_step_row(prob, state)?;
    let mut at_d1 = vec![0.0; prob.n_cols()];
    prob.matrix().matvec_t(&next.d1, &mut at_d1);
    for j in 0..prob.n_cols() {
        next.d0[j] = (prob.q()[j] + alpha - 1.0) / (at_d1[j] + beta);
    }
    Ok(next)
}

/// Rescales `(d⁰, d¹)` to `(d⁰/c, c·d¹)` so that `Σ log d⁰ = Σ log d¹`, i.e.
/// `(log d⁰, −log d¹)` lands in the subspace orthogonal to the ones vector.
/// The constant is accumulated in log space; the scaled matrix and every
/// potential value are unchanged by this transformation.
pub fn normalize_gauge(state: &ScalingState) -> ScalingState {
    let mut next = state.clone();
    normalize_gauge_inplace(&mut next.d0, &mut next.d1);
    next
}

fn normalize_gauge_inplace(d0: &mut [f64], d1: &mut [f64]) {
    let log_sum0: f64 = d0.iter().map(|x| x.ln()).sum();
    let log_sum1: f64 = d1.iter().map(|x| x.ln()).sum();
    let log_c = (log_sum0 - log_sum1) / (d0.len() + d1.len()) as f64;
    let c = log_c.exp();
    if c == 1.0 {
        return;
    }
    for x in d0.iter_mut() {
        *x /= c;
    }
    for x in d1.iter_mut() {
        *x *= c;
    }
}

fn robust_quadratic_term(prob: &BalancingProblem, d0: &[f64], d1: &[f64]) -> f64 {
    // Σ A_ij d¹_i d⁰_j via exp(log) so that diverging scaling pairs with a
    // bounded scaled matrix do not overflow midway.
    let extreme = d0.iter().chain(d1).any(|&x| !(1e-100..=1e100).contains(&x));
    if !extreme {
        let mut a_d0 = vec![0.0; prob.n_rows()];
        prob.matrix().matvec(d0, &mut a_d0);
        return d1.iter().zip(&a_d0).map(|(x, y)| x * y).sum();
    }
    let log_d0: Vec<f64> = d0.iter().map(|x| x.ln()).collect();
    let log_d1: Vec<f64> = d1.iter().map(|x| x.ln()).collect();
    prob.matrix()
        .triplets()
        .map(|(i, j, v)| (v.ln() + log_d1[i] + log_d0[j]).exp())
        .sum()
}

/// Evaluates the dual potential at `state` through both algebraic routes and,
/// when a reference optimum is cached on the problem, the optimality gap.
pub fn potential(prob: &BalancingProblem, state: &ScalingState) -> PotentialValue {
    let g_dual = potential_dual(prob, &state.d0, &state.d1);

    // Reparameterized form at u = log d⁰, v = −log d¹.
    let u: Vec<f64> = state.d0.iter().map(|x| x.ln()).collect();
    let v: Vec<f64> = state.d1.iter().map(|x| -x.ln()).collect();
    let mut g_reparam = 0.0;
    for (i, j, a) in prob.matrix().triplets() {
        g_reparam += a * (u[j] - v[i]).exp();
    }
    g_reparam += prob.p().iter().zip(&v).map(|(p, vi)| p * vi).sum::<f64>();
    g_reparam -= prob.q().iter().zip(&u).map(|(q, uj)| q * uj).sum::<f64>();

    let gap_to_reference = prob
        .reference_optimum()
        .map(|(d0, d1)| g_dual - potential_dual(prob, d0, d1));

    PotentialValue {
        g_dual,
        g_reparam,
        gap_to_reference,
    }
}

pub(crate) fn potential_dual(prob: &BalancingProblem, d0: &[f64], d1: &[f64]) -> f64 {
    let quad = robust_quadratic_term(prob, d0, d1);
    let log_d1: f64 = prob.p().iter().zip(d1).map(|(p, x)| p * x.ln()).sum();
    let log_d0: f64 = prob.q().iter().zip(d0).map(|(q, x)| q * x.ln()).sum();
    quad - log_d1 - log_d0
}

pub(crate) fn regularized_potential(
    prob: &BalancingProblem,
    d0: &[f64],
    d1: &[f64],
    alpha: f64,
    beta: f64,
) -> f64 {
    let quad = robust_quadratic_term(prob, d0, d1);
    let beta_term: f64 = beta * d0.iter().sum::<f64>();
    let log_d1: f64 = prob.p().iter().zip(d1).map(|(p, x)| p * x.ln()).sum();
    let log_d0: f64 = prob
        .q()
        .iter()
        .zip(d0)
        .map(|(q, x)| (q + alpha - 1.0) * x.ln())
        .sum();
    quad + beta_term - log_d1 - log_d0
}

/// Runs the configured Sinkhorn variant until the stop metric drops below
/// `tol` or the iteration budget runs out. Overflow of a scaling vector is a
/// structured termination (limit scaling suspected), not an error.
pub fn run(
    prob: &BalancingProblem,
    config: &SinkhornConfig,
) -> Result<(ScalingState, RunReport), BalancingError> {
    config.validate()?;
    if config.variant != Variant::Regularized && prob.has_zero_cols() {
        return Err(BalancingError::InvalidConfig(
            "q has zero entries; only the regularized variant accepts them".into(),
        ));
    }

    let n = prob.n_rows();
    let m = prob.n_cols();
    let a = prob.matrix();
    let regularized = config.variant == Variant::Regularized;
    let normalized = config.variant == Variant::Normalized;

    let mut d0 = match &config.initial_d0 {
        Some(v) => {
            if v.len() != m {
                return Err(BalancingError::Model(ModelError::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                    context: "initial_d0",
                }));
            }
            for (j, &x) in v.iter().enumerate() {
                if !(x.is_finite() && x > 0.0) {
                    return Err(BalancingError::Model(ModelError::InvalidScaling {
                        which: "initial_d0",
                        index: j,
                        value: x,
                    }));
                }
            }
            v.clone()
        }
        None => vec![1.0; m],
    };
    let mut d1 = vec![1.0; n];

    let potential_at = |d0: &[f64], d1: &[f64]| -> f64 {
        if regularized {
            regularized_potential(prob, d0, d1, config.alpha, config.beta)
        } else {
            potential_dual(prob, d0, d1)
        }
    };

    let mut history: Option<Vec<IterationRecord>> = config.record_history.then(Vec::new);

    let mut a_d0 = vec![0.0; n];
    a.matvec(&d0, &mut a_d0);

    if let Some(h) = history.as_mut() {
        let r: Vec<f64> = d1.iter().zip(&a_d0).map(|(x, y)| x * y).collect();
        let mut at_d1 = vec![0.0; m];
        a.matvec_t(&d1, &mut at_d1);
        let c: Vec<f64> = d0.iter().zip(&at_d1).map(|(x, y)| x * y).collect();
        h.push(IterationRecord {
            t: 0,
            g: potential_at(&d0, &d1),
            l1_row_err: l1_distance(prob.p(), &r),
            kl_row: kl_divergence(prob.p(), &r),
            kl_col: kl_divergence(prob.q(), &c),
            d0: config.record_scalings.then(|| d0.clone()),
            d1: config.record_scalings.then(|| d1.clone()),
        });
    }

    let mut prev_d0 = d0.clone();
    let mut prev_d1 = d1.clone();
    let mut at_d1 = vec![0.0; m];
    let mut final_l1_row = f64::INFINITY;
    let mut final_l1_col = f64::INFINITY;
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;

    for t in 1..=config.max_iterations {
        // Row half-step.
        for i in 0..n {
            d1[i] = prob.p()[i] / a_d0[i];
        }
        if check_overflow(&d1, "d1").is_err() {
            termination = Termination::Overflow;
            d1.copy_from_slice(&prev_d1);
            break;
        }
        if normalized {
            normalize_gauge_inplace(&mut d0, &mut d1);
        }

        a.matvec_t(&d1, &mut at_d1);
        let kl_col_mid = if history.is_some() {
            let c_mid: Vec<f64> = d0.iter().zip(&at_d1).map(|(x, y)| x * y).collect();
            kl_divergence(prob.q(), &c_mid)
        } else {
            0.0
        };

        // Column half-step.
        if regularized {
            for j in 0..m {
                d0[j] = (prob.q()[j] + config.alpha - 1.0) / (at_d1[j] + config.beta);
            }
        } else {
            for j in 0..m {
                d0[j] = prob.q()[j] / at_d1[j];
            }
        }
        if check_overflow(&d0, "d0").is_err() {
            termination = Termination::Overflow;
            d0.copy_from_slice(&prev_d0);
            break;
        }
        if normalized {
            normalize_gauge_inplace(&mut d0, &mut d1);
            a.matvec_t(&d1, &mut at_d1);
        }

        iterations = t;
        a.matvec(&d0, &mut a_d0);
        let r: Vec<f64> = d1.iter().zip(&a_d0).map(|(x, y)| x * y).collect();
        let c: Vec<f64> = d0.iter().zip(&at_d1).map(|(x, y)| x * y).collect();
        final_l1_row = l1_distance(prob.p(), &r);
        final_l1_col = l1_distance(prob.q(), &c);

        if let Some(h) = history.as_mut() {
            h.push(IterationRecord {
                t,
                g: potential_at(&d0, &d1),
                l1_row_err: final_l1_row,
                kl_row: kl_divergence(prob.p(), &r),
                kl_col: kl_col_mid,
                d0: config.record_scalings.then(|| d0.clone()),
                d1: config.record_scalings.then(|| d1.clone()),
            });
        }

        let metric = match config.stop_metric {
            StopMetric::L1Marginal => {
                if regularized {
                    final_l1_row
                } else {
                    final_l1_row + final_l1_col
                }
            }
            StopMetric::MaxScalingUpdate => {
                let mut u = 0.0f64;
                for (new, old) in d0.iter().zip(&prev_d0) {
                    u = u.max((new / old).ln().abs());
                }
                for (new, old) in d1.iter().zip(&prev_d1) {
                    u = u.max((new / old).ln().abs());
                }
                u
            }
        };
        prev_d0.copy_from_slice(&d0);
        prev_d1.copy_from_slice(&d1);

        if metric < config.tol {
            termination = Termination::Converged;
            break;
        }
    }

    let state = ScalingState {
        d0,
        d1,
        iteration: iterations,
    };
    let report = RunReport {
        variant: config.variant,
        iterations,
        termination,
        final_l1_row_err: final_l1_row,
        final_l1_col_err: final_l1_col,
        history,
    };
    Ok((state, report))
}

/// Maximum residual of the per-iteration identity
/// `g_t − g_{t+1} = D_KL(p‖r_t) + D_KL(q‖c_{t+1})`, where `r_t` is measured
/// after the column half-step of iteration `t` and `c_{t+1}` mid-iteration
/// `t+1`, right after its row half-step.
pub fn optimality_gap_identity_check(report: &RunReport) -> Result<f64, BalancingError> {
    if report.variant == Variant::Regularized {
        return Err(BalancingError::InvalidConfig(
            "the optimality-gap identity applies to the plain potential only".into(),
        ));
    }
    let history = report.history()?;
    if history.len() < 2 {
        return Err(BalancingError::InsufficientHistory(format!(
            "need at least 2 recorded iterations, got {}",
            history.len()
        )));
    }
    let mut max_residual = 0.0f64;
    for w in history.windows(2) {
        if w[1].t != w[0].t + 1 {
            return Err(BalancingError::InsufficientHistory(
                "history must record consecutive iterations".into(),
            ));
        }
        let decrease = w[0].g - w[1].g;
        let kl_sum = w[0].kl_row + w[1].kl_col;
        max_residual = max_residual.max((decrease - kl_sum).abs());
    }
    Ok(max_residual)
}
