//! Graph Laplacians, algebraic connectivity, and the convergence-rate
//! diagnostics: the global linear-rate bound driven by the Fiedler eigenvalue,
//! the sharp asymptotic rate `λ₂(ÃÃᵀ)`, the complexity constants `C` and
//! `ξ(A,p,q)`, and the scaling-envelope check for trajectories started from
//! the all-ones point.

use crate::balancing::{self, BalancingError, RunReport, SinkhornConfig, Variant};
use crate::model::{marginals, scaled_matrix, BalancingProblem, NonnegMatrix, ScalingState};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

/// Above this dimension, Fiedler eigenvalues switch from the dense symmetric
/// eigensolver to shift-invert Lanczos.
pub const DENSE_EIGEN_LIMIT: usize = 200;

/// Dense fallback gate for operations that materialize `n×m` matrices.
pub const DENSE_MATRIX_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("eigensolver failed to converge")]
    EigensolverNoConvergence,
    #[error("history is missing or too short for this diagnostic: {0}")]
    InsufficientHistory(String),
    #[error("state is not converged (l1 row err {l1_row_err:e}, col err {l1_col_err:e}, required {required:e})")]
    NotConverged {
        l1_row_err: f64,
        l1_col_err: f64,
        required: f64,
    },
    #[error("diagnostic not applicable: {0}")]
    NotApplicable(String),
    #[error("matrix too large for the dense path ({rows} x {cols})")]
    TooLarge { rows: usize, cols: usize },
    #[error(transparent)]
    Balancing(#[from] BalancingError),
}

/// Laplacian of the bipartite graph with biadjacency `A`, kept in structural
/// form (degrees plus the sparse `A`) so that large instances can run
/// matrix-free. Block layout: `[[diag(A·1), −A], [−Aᵀ, diag(Aᵀ·1)]]`, row
/// nodes first.
#[derive(Debug, Clone)]
pub struct BipartiteLaplacian {
    a: NonnegMatrix,
    row_degrees: Vec<f64>,
    col_degrees: Vec<f64>,
}

impl BipartiteLaplacian {
    pub fn size(&self) -> usize {
        self.a.n_rows() + self.a.n_cols()
    }

    pub fn row_degrees(&self) -> &[f64] {
        &self.row_degrees
    }

    pub fn col_degrees(&self) -> &[f64] {
        &self.col_degrees
    }

    /// Dense assembly of the block formula.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.a.n_rows();
        let m = self.a.n_cols();
        let mut l = DMatrix::zeros(n + m, n + m);
        for i in 0..n {
            l[(i, i)] = self.row_degrees[i];
        }
        for j in 0..m {
            l[(n + j, n + j)] = self.col_degrees[j];
        }
        for (i, j, v) in self.a.triplets() {
            l[(i, n + j)] = -v;
            l[(n + j, i)] = -v;
        }
        l
    }

    /// Second smallest eigenvalue (algebraic connectivity); zero iff the
    /// bipartite graph is disconnected.
    pub fn fiedler(&self) -> Result<f64, SpectralError> {
        if !self.is_connected() {
            return Ok(0.0);
        }
        if self.size() <= DENSE_EIGEN_LIMIT {
            fiedler_dense(&self.to_dense())
        } else {
            fiedler_shift_invert(self, self.gershgorin_bound())
        }
    }

    fn gershgorin_bound(&self) -> f64 {
        let d = self
            .row_degrees
            .iter()
            .chain(&self.col_degrees)
            .cloned()
            .fold(0.0, f64::max);
        2.0 * d
    }

    fn is_connected(&self) -> bool {
        let n = self.a.n_rows();
        let m = self.a.n_cols();
        let mut seen = vec![false; n + m];
        let mut cols_of_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut rows_of_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, j, _) in self.a.triplets() {
            cols_of_rows[i].push(j);
            rows_of_cols[j].push(i);
        }
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            if v < n {
                for &j in &cols_of_rows[v] {
                    if !seen[n + j] {
                        seen[n + j] = true;
                        stack.push(n + j);
                    }
                }
            } else {
                for &i in &rows_of_cols[v - n] {
                    if !seen[i] {
                        seen[i] = true;
                        stack.push(i);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

impl SymOp for BipartiteLaplacian {
    fn size(&self) -> usize {
        self.size()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.a.n_rows();
        for (i, d) in self.row_degrees.iter().enumerate() {
            y[i] = d * x[i];
        }
        for (j, d) in self.col_degrees.iter().enumerate() {
            y[n + j] = d * x[n + j];
        }
        for (i, j, v) in self.a.triplets() {
            y[i] -= v * x[n + j];
            y[n + j] -= v * x[i];
        }
    }
}

/// Assembles the bipartite-graph Laplacian of `A`.
pub fn bipartite_laplacian(a: &NonnegMatrix) -> BipartiteLaplacian {
    let lap = BipartiteLaplacian {
        row_degrees: a.row_sums(),
        col_degrees: a.col_sums(),
        a: a.clone(),
    };
    debug_assert!({
        let dense = lap.to_dense();
        let bound = 1e-12 * a.sum();
        (0..lap.size()).all(|i| dense.row(i).sum().abs() <= bound)
    });
    lap
}

/// Laplacian `L = diag(AᵀA·1) − AᵀA` of the item co-occurrence graph; the
/// diagonal of `AᵀA` cancels between the degree and adjacency terms, so the
/// direct formula already matches the zeroed-diagonal adjacency.
pub fn comparison_laplacian(a: &NonnegMatrix) -> Result<DMatrix<f64>, SpectralError> {
    let m = a.n_cols();
    if m * m > DENSE_MATRIX_LIMIT {
        return Err(SpectralError::TooLarge { rows: m, cols: m });
    }
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..a.n_rows() {
        let row: Vec<(usize, f64)> = a.row(i).collect();
        for &(j, vj) in &row {
            for &(k, vk) in &row {
                gram[(j, k)] += vj * vk;
            }
        }
    }
    let mut l = DMatrix::zeros(m, m);
    for j in 0..m {
        let degree: f64 = gram.row(j).sum();
        l[(j, j)] = degree - gram[(j, j)];
        for k in 0..m {
            if k != j {
                l[(j, k)] = -gram[(j, k)];
            }
        }
    }
    Ok(l)
}

/// Second smallest eigenvalue of a symmetric PSD matrix with the ones vector
/// in its null space. Dense solve up to [`DENSE_EIGEN_LIMIT`], shift-invert
/// Lanczos above it; absolute accuracy `1e-9·‖L‖₂`.
pub fn fiedler_eigenvalue(l: &DMatrix<f64>) -> Result<f64, SpectralError> {
    if !pattern_connected(l) {
        return Ok(0.0);
    }
    if l.nrows() <= DENSE_EIGEN_LIMIT {
        fiedler_dense(l)
    } else {
        let bound = (0..l.nrows())
            .map(|i| l.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        fiedler_shift_invert(&DenseOp(l), bound)
    }
}

fn pattern_connected(l: &DMatrix<f64>) -> bool {
    let n = l.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..n {
            if w != v && l[(v, w)] != 0.0 && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&s| s)
}

pub(crate) fn fiedler_dense(l: &DMatrix<f64>) -> Result<f64, SpectralError> {
    let eigen = SymmetricEigen::try_new(l.clone(), 1e-13, 10_000)
        .ok_or(SpectralError::EigensolverNoConvergence)?;
    let mut evs: Vec<f64> = eigen.eigenvalues.iter().cloned().collect();
    evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if evs.len() < 2 {
        return Err(SpectralError::NotApplicable(
            "Fiedler eigenvalue needs dimension at least 2".into(),
        ));
    }
    Ok(evs[1].max(0.0))
}

/// Matrix-free symmetric operator.
pub(crate) trait SymOp {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

struct DenseOp<'a>(&'a DMatrix<f64>);

impl SymOp for DenseOp<'_> {
    fn size(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.0.nrows() {
            let mut acc = 0.0;
            for j in 0..self.0.ncols() {
                acc += self.0[(i, j)] * x[j];
            }
            y[i] = acc;
        }
    }
}

fn project_out_ones(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for `L y = b` restricted to the subspace orthogonal to
/// the ones vector, where `L` is PSD with null space spanned by ones.
fn solve_projected_cg(op: &dyn SymOp, b: &[f64]) -> Result<Vec<f64>, SpectralError> {
    let n = op.size();
    let mut r = b.to_vec();
    project_out_ones(&mut r);
    let norm_b = dot(&r, &r).sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for _ in 0..(20 * n).max(200) {
        op.apply(&p, &mut ap);
        project_out_ones(&mut ap);
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            return Err(SpectralError::EigensolverNoConvergence);
        }
        let alpha = rs / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= 1e-13 * norm_b {
            project_out_ones(&mut x);
            return Ok(x);
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(SpectralError::EigensolverNoConvergence)
}

/// Shift-invert Lanczos at shift zero: full-reorthogonalized Lanczos on
/// `P L⁺ P` (projection `P` removes the ones direction, `L⁺` applied by
/// projected CG). The largest Ritz value `θ` of the inverse operator gives
/// `λ₋₂ = 1/θ`.
fn fiedler_shift_invert(op: &dyn SymOp, norm_bound: f64) -> Result<f64, SpectralError> {
    let n = op.size();
    let max_steps = (n - 1).min(300);

    // Deterministic quasi-random start vector.
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let x = (i as f64 + 1.0) * 0.618_033_988_749_894_9;
            x - x.floor() - 0.5
        })
        .collect();
    project_out_ones(&mut v);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut basis: Vec<Vec<f64>> = vec![v.clone()];

    let top_ritz = |alphas: &[f64], betas: &[f64], beta_next: f64| -> Option<f64> {
        let k = alphas.len();
        let mut t = DMatrix::zeros(k, k);
        for (i, &a) in alphas.iter().enumerate() {
            t[(i, i)] = a;
        }
        for (i, &b) in betas.iter().take(k.saturating_sub(1)).enumerate() {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        let eig = SymmetricEigen::new(t);
        let (idx, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
        let theta = *theta;
        if theta <= 0.0 {
            return None;
        }
        let last = eig.eigenvectors[(k - 1, idx)].abs();
        let residual = beta_next * last;
        (residual <= 1e-11 * theta).then_some(theta)
    };

    for k in 0..max_steps {
        let mut w = solve_projected_cg(op, &basis[k])?;
        let alpha = dot(&w, &basis[k]);
        alphas.push(alpha);
        for i in 0..n {
            w[i] -= alpha * basis[k][i];
        }
        if k > 0 {
            let beta_prev = betas[k - 1];
            for i in 0..n {
                w[i] -= beta_prev * basis[k - 1][i];
            }
        }
        // Full reorthogonalization.
        for q in &basis {
            let proj = dot(&w, q);
            for i in 0..n {
                w[i] -= proj * q[i];
            }
        }
        project_out_ones(&mut w);
        let beta = dot(&w, &w).sqrt();

        if beta <= 1e-14 {
            // Exhausted the Krylov space; the Ritz values are exact.
            if let Some(theta) = top_ritz(&alphas, &betas, 0.0) {
                return Ok(1.0 / theta);
            }
            return Err(SpectralError::EigensolverNoConvergence);
        }
        betas.push(beta);

        if (k + 1) % 5 == 0 || k + 1 == max_steps {
            if let Some(theta) = top_ritz(&alphas, &betas, beta) {
                let lambda = 1.0 / theta;
                debug_assert!(lambda <= norm_bound * 1.000_001);
                return Ok(lambda);
            }
        }

        let mut next = w;
        next.iter_mut().for_each(|x| *x /= beta);
        basis.push(next);
    }
    Err(SpectralError::EigensolverNoConvergence)
}

/// Hessian of the reparameterized potential at `(v, u) = (−log d¹, log d⁰)`,
/// assembled from its analytic second partials (row block first). At the
/// origin it equals the bipartite Laplacian of `A` entrywise.
pub fn potential_hessian(prob: &BalancingProblem, state: &ScalingState) -> DMatrix<f64> {
    let n = prob.n_rows();
    let m = prob.n_cols();
    let u: Vec<f64> = state.d0.iter().map(|x| x.ln()).collect();
    let v: Vec<f64> = state.d1.iter().map(|x| -x.ln()).collect();
    let mut h = DMatrix::zeros(n + m, n + m);
    for (i, j, a) in prob.matrix().triplets() {
        let w = a * (u[j] - v[i]).exp();
        h[(i, i)] += w;
        h[(n + j, n + j)] += w;
        h[(i, n + j)] = -w;
        h[(n + j, i)] = -w;
    }
    h
}

/// Inputs to the global linear-rate statement: the Fiedler eigenvalue of the
/// unscaled bipartite Laplacian, the smoothness parameters, the trajectory
/// sup of the gauge-centered iterates, and the assembled rate bound
/// `1 − e^{−4·b}·λ₋₂/min(l0, l1)`.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalRateBound {
    pub fiedler: f64,
    pub l0: f64,
    pub l1: f64,
    pub b_empirical: f64,
    pub bound: f64,
}

/// `b_empirical` is the trajectory sup of `‖(u, v) − mean·1‖∞`; it lower
/// bounds the sub-level-set diameter the analytic statement uses, and the
/// bound is monotone in it.
pub fn global_rate_bound(
    prob: &BalancingProblem,
    report: &RunReport,
) -> Result<GlobalRateBound, SpectralError> {
    let history = report
        .history
        .as_deref()
        .ok_or_else(|| SpectralError::InsufficientHistory("run recorded no history".into()))?;
    let mut b = 0.0f64;
    let mut saw_scalings = false;
    for rec in history {
        let (Some(d0), Some(d1)) = (&rec.d0, &rec.d1) else {
            continue;
        };
        saw_scalings = true;
        let mut z: Vec<f64> = d1.iter().map(|x| -x.ln()).collect();
        z.extend(d0.iter().map(|x| x.ln()));
        project_out_ones(&mut z);
        let sup = z.iter().map(|x| x.abs()).fold(0.0, f64::max);
        b = b.max(sup);
    }
    if !saw_scalings {
        return Err(SpectralError::InsufficientHistory(
            "run recorded no scaling vectors; enable record_scalings".into(),
        ));
    }
    let a = prob.matrix();
    let l0 = a.col_sums().into_iter().fold(0.0, f64::max);
    let l1 = a.row_sums().into_iter().fold(0.0, f64::max);
    let fiedler = bipartite_laplacian(a).fiedler()?;
    let bound = 1.0 - (-4.0 * b).exp() * fiedler / l0.min(l1);
    Ok(GlobalRateBound {
        fiedler,
        l0,
        l1,
        b_empirical: b,
        bound,
    })
}

fn require_solved(
    prob: &BalancingProblem,
    state: &ScalingState,
    rel_tol: f64,
) -> Result<(), SpectralError> {
    let snap = marginals(prob, state).map_err(BalancingError::from)?;
    let sum_p: f64 = prob.p().iter().sum();
    let required = rel_tol * sum_p;
    if snap.l1_row_err > required || snap.l1_col_err > required {
        return Err(SpectralError::NotConverged {
            l1_row_err: snap.l1_row_err,
            l1_col_err: snap.l1_col_err,
            required,
        });
    }
    Ok(())
}

/// Sharp asymptotic contraction factor `λ₂(ÃÃᵀ)` with
/// `Ã = D(1/√p)·Â·D(1/√q)` built from the solved scaled matrix. Also checks
/// the top spectral pair (eigenvalue 1, eigenvector `√p`) before trusting the
/// subdominant value. Requires marginal errors at or below `1e-10·Σp`.
pub fn asymptotic_rate(
    prob: &BalancingProblem,
    state: &ScalingState,
) -> Result<f64, SpectralError> {
    require_solved(prob, state, 1e-10)?;
    let n = prob.n_rows();
    let m = prob.n_cols();
    if n * m > DENSE_MATRIX_LIMIT {
        return Err(SpectralError::TooLarge { rows: n, cols: m });
    }
    let ahat = scaled_matrix(prob, state).map_err(BalancingError::from)?;
    let sqrt_p: Vec<f64> = prob.p().iter().map(|x| x.sqrt()).collect();
    let sqrt_q: Vec<f64> = prob.q().iter().map(|x| x.sqrt()).collect();
    let mut atilde = DMatrix::zeros(n, m);
    for (i, j, v) in ahat.triplets() {
        atilde[(i, j)] = v / (sqrt_p[i] * sqrt_q[j]);
    }

    // ÃÃᵀ and ÃᵀÃ share their nonzero spectrum; work on the smaller side.
    // Its top eigenvector is √p on the row side, √q on the column side.
    let (gram, top_vec) = if n <= m {
        (&atilde * atilde.transpose(), sqrt_p)
    } else {
        (atilde.transpose() * &atilde, sqrt_q)
    };

    let mut applied = vec![0.0; top_vec.len()];
    DenseOp(&gram).apply(&top_vec, &mut applied);
    let norm: f64 = dot(&top_vec, &top_vec).sqrt();
    let residual: f64 = applied
        .iter()
        .zip(&top_vec)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if residual > 1e-8 * norm {
        return Err(SpectralError::NotConverged {
            l1_row_err: residual,
            l1_col_err: 0.0,
            required: 1e-8 * norm,
        });
    }

    let eigen = SymmetricEigen::try_new(gram, 1e-13, 10_000)
        .ok_or(SpectralError::EigensolverNoConvergence)?;
    let mut evs: Vec<f64> = eigen.eigenvalues.iter().cloned().collect();
    evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if (evs[0] - 1.0).abs() > 1e-8 {
        return Err(SpectralError::NotConverged {
            l1_row_err: (evs[0] - 1.0).abs(),
            l1_col_err: 0.0,
            required: 1e-8,
        });
    }
    if evs.len() < 2 {
        return Ok(0.0);
    }
    Ok(evs[1].clamp(0.0, 1.0))
}

/// The constant `C = max{‖d⁰*‖∞/‖d⁰*‖₋∞, 1/(‖d⁰*‖₋∞‖d¹*‖₋∞), ‖d⁰*‖∞‖d¹*‖∞}`
/// from the iteration-complexity bound, and `ξ = C²·min{max q, max p}/λ₋₂(𝓛)`.
/// Every term of `C` is invariant under the gauge `(d⁰/c, c·d¹)`. The
/// constants bound trajectories started from the all-ones column scaling,
/// the reference initialization throughout this crate.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityConstants {
    pub c_constant: f64,
    pub xi_constant: f64,
}

fn min_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn complexity_constants(
    prob: &BalancingProblem,
    state: &ScalingState,
) -> Result<ComplexityConstants, SpectralError> {
    require_solved(prob, state, 1e-6)?;
    let c = c_constant(&state.d0, &state.d1);
    let fiedler = bipartite_laplacian(prob.matrix()).fiedler()?;
    let max_p = prob.p().iter().cloned().fold(0.0, f64::max);
    let max_q = prob.q().iter().cloned().fold(0.0, f64::max);
    Ok(ComplexityConstants {
        c_constant: c,
        xi_constant: c * c * max_q.min(max_p) / fiedler,
    })
}

pub(crate) fn c_constant(d0: &[f64], d1: &[f64]) -> f64 {
    let d0_max = max_abs(d0);
    let d0_min = min_abs(d0);
    let d1_max = max_abs(d1);
    let d1_min = min_abs(d1);
    (d0_max / d0_min)
        .max(1.0 / (d0_min * d1_min))
        .max(d0_max * d1_max)
}

/// Verdict of the envelope check: whether every recorded iterate sits inside
/// the band the all-ones start guarantees around an optimal scaling pair.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeVerdict {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<EnvelopeViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeViolation {
    pub t: usize,
    pub which: &'static str,
    pub index: usize,
}

/// Checks, for every recorded iteration of a plain run started from `d⁰ = 1`,
/// the elementwise envelope `d⁰*/‖d⁰*‖∞ ≤ d⁰ ≤ d⁰*/‖d⁰*‖₋∞` and
/// `‖d⁰*‖₋∞·d¹* ≤ d¹ ≤ ‖d⁰*‖∞·d¹*` at relative tolerance `1e-9`.
pub fn skbnd_envelope_check(
    prob: &BalancingProblem,
    report: &RunReport,
    solved: &ScalingState,
) -> Result<EnvelopeVerdict, SpectralError> {
    if report.variant != Variant::Plain {
        return Err(SpectralError::NotApplicable(
            "the envelope is stated for the plain iteration".into(),
        ));
    }
    require_solved(prob, solved, 1e-6)?;
    let history = report
        .history
        .as_deref()
        .ok_or_else(|| SpectralError::InsufficientHistory("run recorded no history".into()))?;
    let first = history
        .first()
        .filter(|rec| rec.t == 0)
        .and_then(|rec| rec.d0.as_ref())
        .ok_or_else(|| {
            SpectralError::InsufficientHistory("run must record scalings from iteration 0".into())
        })?;
    if first.iter().any(|&x| x != 1.0) {
        return Err(SpectralError::NotApplicable(
            "trajectory did not start from the all-ones column scaling".into(),
        ));
    }

    let d0_max = max_abs(&solved.d0);
    let d0_min = min_abs(&solved.d0);
    let lo0: Vec<f64> = solved.d0.iter().map(|x| x / d0_max).collect();
    let hi0: Vec<f64> = solved.d0.iter().map(|x| x / d0_min).collect();
    let lo1: Vec<f64> = solved.d1.iter().map(|x| x * d0_min).collect();
    let hi1: Vec<f64> = solved.d1.iter().map(|x| x * d0_max).collect();
    const TOL: f64 = 1e-9;

    for rec in history {
        let (Some(d0), Some(d1)) = (&rec.d0, &rec.d1) else {
            continue;
        };
        for (j, &x) in d0.iter().enumerate() {
            if x < lo0[j] * (1.0 - TOL) || x > hi0[j] * (1.0 + TOL) {
                return Ok(EnvelopeVerdict {
                    holds: false,
                    first_violation: Some(EnvelopeViolation {
                        t: rec.t,
                        which: "d0",
                        index: j,
                    }),
                });
            }
        }
        // d¹ at t = 0 is a placeholder (the first half-step overwrites it),
        // so only the d⁰ bound applies there.
        if rec.t == 0 {
            continue;
        }
        for (i, &x) in d1.iter().enumerate() {
            if x < lo1[i] * (1.0 - TOL) || x > hi1[i] * (1.0 + TOL) {
                return Ok(EnvelopeVerdict {
                    holds: false,
                    first_violation: Some(EnvelopeViolation {
                        t: rec.t,
                        which: "d1",
                        index: i,
                    }),
                });
            }
        }
    }
    Ok(EnvelopeVerdict {
        holds: true,
        first_violation: None,
    })
}

/// Everything the `diagnose` command reports. Solved-state quantities are
/// absent when the run did not reach a direct scaling (limit-scaling or
/// infeasible inputs).
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub fiedler: f64,
    pub l0: f64,
    pub l1: f64,
    pub b_empirical: f64,
    pub global_rate_bound: f64,
    pub asymptotic_rate: Option<f64>,
    pub c_constant: Option<f64>,
    pub xi_constant: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the plain solver with trajectory recording and assembles the full
/// [`RateReport`].
pub fn diagnose(
    prob: &BalancingProblem,
    tol: f64,
    max_iterations: usize,
) -> Result<RateReport, SpectralError> {
    let config = SinkhornConfig::plain()
        .with_tol(tol)
        .with_max_iterations(max_iterations)
        .with_scalings();
    let (state, report) = balancing::run(prob, &config)?;
    let grb = global_rate_bound(prob, &report)?;
    let asymptotic = asymptotic_rate(prob, &state).ok();
    let constants = complexity_constants(prob, &state).ok();
    Ok(RateReport {
        fiedler: grb.fiedler,
        l0: grb.l0,
        l1: grb.l1,
        b_empirical: grb.b_empirical,
        global_rate_bound: grb.bound,
        asymptotic_rate: asymptotic,
        c_constant: constants.as_ref().map(|c| c.c_constant),
        xi_constant: constants.as_ref().map(|c| c.xi_constant),
        iterations: report.iterations,
        converged: report.converged(),
    })
}
