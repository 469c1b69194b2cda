//! Problem data types shared by every solver and diagnostic in the crate:
//! sparse non-negative matrices, balancing problems `(A, p, q)`, scaling
//! states `(d⁰, d¹)`, and marginal snapshots.

use serde::Serialize;
use thiserror::Error;

/// Errors raised while constructing or combining the core data types.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("matrix entry ({row}, {col}) = {value} is not a finite non-negative number")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("duplicate matrix entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("{which} {index} has no positive entries")]
    ZeroRowOrColumn { which: &'static str, index: usize },
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("marginal {which}[{index}] = {value} must be positive and finite")]
    NonpositiveMarginal {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("marginal sums differ: sum(p) = {sum_p}, sum(q) = {sum_q} (relative gap {rel_gap:e} exceeds 1e-12)")]
    MarginalSumMismatch { sum_p: f64, sum_q: f64, rel_gap: f64 },
    #[error("scaling vector {which}[{index}] = {value} must be positive and finite")]
    InvalidScaling {
        which: &'static str,
        index: usize,
        value: f64,
    },
}

/// Relative slack allowed between `sum(p)` and `sum(q)` before the problem is
/// rejected; anything smaller is absorbed by rescaling `q`.
pub const MARGINAL_SUM_REL_TOL: f64 = 1e-12;

/// Sparse non-negative matrix in CSR form. Explicit zeros are dropped at
/// construction, so every stored value is strictly positive and finite, and
/// no row or column may be entirely zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NonnegMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Zero values are
    /// omitted; negative, NaN, or infinite values and duplicate coordinates
    /// are rejected, as are all-zero rows or columns.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, ModelError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(ModelError::EmptyMatrix);
        }
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n_rows {
                return Err(ModelError::DimensionMismatch {
                    expected: n_rows,
                    got: i + 1,
                    context: "row index",
                });
            }
            if j >= n_cols {
                return Err(ModelError::DimensionMismatch {
                    expected: n_cols,
                    got: j + 1,
                    context: "column index",
                });
            }
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
            if v > 0.0 {
                entries.push((i, j, v));
            }
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(ModelError::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }

        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let values: Vec<f64> = entries.iter().map(|e| e.2).collect();

        let m = Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        for i in 0..n_rows {
            if m.row_ptr[i] == m.row_ptr[i + 1] {
                return Err(ModelError::ZeroRowOrColumn {
                    which: "row",
                    index: i,
                });
            }
        }
        let mut col_seen = vec![false; n_cols];
        for &j in &m.col_idx {
            col_seen[j] = true;
        }
        if let Some(j) = col_seen.iter().position(|s| !s) {
            return Err(ModelError::ZeroRowOrColumn {
                which: "column",
                index: j,
            });
        }
        Ok(m)
    }

    /// Builds a matrix from dense rows; zeros are omitted.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(ModelError::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                    context: "dense row length",
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(jj, _)| jj == j)
            .map_or(0.0, |(_, v)| v)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    /// `y = Aᵀ x`.
    pub fn matvec_t(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for i in 0..self.n_rows {
            let xi = x[i];
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
    }

    /// Row sums `A·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Column sums `Aᵀ·1`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_cols];
        for (_, j, v) in self.triplets() {
            c[j] += v;
        }
        c
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// True when both matrices store entries at exactly the same coordinates.
    pub fn same_pattern(&self, other: &NonnegMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// Dense copy; intended for desk-scale spectral work (`n·m ≤ 10⁶`).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }
}

/// The canonical matrix balancing problem: find positive diagonal scalings
/// `D¹, D⁰` with `D¹AD⁰·1 = p` and `(D¹AD⁰)ᵀ·1 = q`.
#[derive(Debug, Clone)]
pub struct BalancingProblem {
    a: NonnegMatrix,
    p: Vec<f64>,
    q: Vec<f64>,
    q_rescale: f64,
    allows_zero_cols: bool,
    reference_optimum: Option<(Vec<f64>, Vec<f64>)>,
}

fn validate_marginal(
    v: &[f64],
    expected_len: usize,
    which: &'static str,
    allow_zero: bool,
) -> Result<(), ModelError> {
    if v.len() != expected_len {
        return Err(ModelError::DimensionMismatch {
            expected: expected_len,
            got: v.len(),
            context: which,
        });
    }
    for (i, &x) in v.iter().enumerate() {
        let ok = x.is_finite() && if allow_zero { x >= 0.0 } else { x > 0.0 };
        if !ok {
            return Err(ModelError::NonpositiveMarginal {
                which,
                index: i,
                value: x,
            });
        }
    }
    Ok(())
}

impl BalancingProblem {
    /// Validates and builds a problem. `p` and `q` must be strictly positive
    /// and their sums must agree to a relative `1e-12`; a smaller mismatch is
    /// absorbed by rescaling `q` (the factor is stored).
    pub fn new(a: NonnegMatrix, p: Vec<f64>, q: Vec<f64>) -> Result<Self, ModelError> {
        Self::build(a, p, q, false)
    }

    /// Like [`BalancingProblem::new`] but permits zero entries in `q`.
    ///
    /// Choice datasets reduce to problems where an item that never wins has
    /// `q_j = 0`; those are rejected by the plain solver but are meaningful
    /// inputs for the regularized variant.
    pub fn with_nonneg_cols(a: NonnegMatrix, p: Vec<f64>, q: Vec<f64>) -> Result<Self, ModelError> {
        Self::build(a, p, q, true)
    }

    fn build(
        a: NonnegMatrix,
        p: Vec<f64>,
        mut q: Vec<f64>,
        allows_zero_cols: bool,
    ) -> Result<Self, ModelError> {
        validate_marginal(&p, a.n_rows(), "p", false)?;
        validate_marginal(&q, a.n_cols(), "q", allows_zero_cols)?;
        let sum_p: f64 = p.iter().sum();
        let sum_q: f64 = q.iter().sum();
        let rel_gap = (sum_p - sum_q).abs() / sum_p.max(sum_q);
        if rel_gap > MARGINAL_SUM_REL_TOL {
            return Err(ModelError::MarginalSumMismatch { sum_p, sum_q, rel_gap });
        }
        let q_rescale = sum_p / sum_q;
        if q_rescale != 1.0 {
            for x in &mut q {
                *x *= q_rescale;
            }
        }
        Ok(Self {
            a,
            p,
            q,
            q_rescale,
            allows_zero_cols,
            reference_optimum: None,
        })
    }

    pub fn matrix(&self) -> &NonnegMatrix {
        &self.a
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn n_rows(&self) -> usize {
        self.a.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.a.n_cols()
    }

    /// Factor applied to `q` so that `sum(p) = sum(q)` holds exactly.
    pub fn q_rescale_factor(&self) -> f64 {
        self.q_rescale
    }

    /// True when the problem was built through [`BalancingProblem::with_nonneg_cols`]
    /// and some `q_j = 0`.
    pub fn has_zero_cols(&self) -> bool {
        self.allows_zero_cols && self.q.contains(&0.0)
    }

    /// Caches a reference optimum `(d⁰*, d¹*)` used by potential evaluations
    /// to report optimality gaps.
    pub fn set_reference_optimum(&mut self, d0: Vec<f64>, d1: Vec<f64>) {
        self.reference_optimum = Some((d0, d1));
    }

    pub fn reference_optimum(&self) -> Option<(&[f64], &[f64])> {
        self.reference_optimum
            .as_ref()
            .map(|(d0, d1)| (d0.as_slice(), d1.as_slice()))
    }
}

/// Current column scaling `d⁰` (length `n_cols`) and row scaling `d¹`
/// (length `n_rows`), plus the number of full iterations that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub iteration: usize,
}

impl ScalingState {
    /// The all-ones state every run starts from by default.
    pub fn ones(n_rows: usize, n_cols: usize) -> Self {
        Self {
            d0: vec![1.0; n_cols],
            d1: vec![1.0; n_rows],
            iteration: 0,
        }
    }

    pub fn new(d0: Vec<f64>, d1: Vec<f64>) -> Result<Self, ModelError> {
        for (i, &x) in d0.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(ModelError::InvalidScaling {
                    which: "d0",
                    index: i,
                    value: x,
                });
            }
        }
        for (i, &x) in d1.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(ModelError::InvalidScaling {
                    which: "d1",
                    index: i,
                    value: x,
                });
            }
        }
        Ok(Self {
            d0,
            d1,
            iteration: 0,
        })
    }
}

/// Marginals of the scaled matrix together with their distances from the
/// targets. `kl_*` are generalized KL divergences `Σ t·ln(t/m) − t + m`,
/// which stay non-negative for unnormalized vectors.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalSnapshot {
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    pub l1_row_err: f64,
    pub l1_col_err: f64,
    pub kl_row: f64,
    pub kl_col: f64,
}

/// Generalized KL divergence `Σ_i target_i·ln(target_i/measured_i) − target_i + measured_i`
/// with the conventions `0·ln 0 = 0` and `+∞` when `measured_i = 0 < target_i`.
pub fn kl_divergence(target: &[f64], measured: &[f64]) -> f64 {
    debug_assert_eq!(target.len(), measured.len());
    let mut acc = 0.0;
    for (&t, &m) in target.iter().zip(measured) {
        if t == 0.0 {
            acc += m;
        } else if m == 0.0 {
            return f64::INFINITY;
        } else {
            acc += t * (t / m).ln() - t + m;
        }
    }
    // Rounding can push an analytically non-negative sum slightly below zero.
    acc.max(0.0)
}

/// `‖a − b‖₁`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Scaled matrix `Â = D¹AD⁰`; shares the sparsity pattern of `A`.
pub fn scaled_matrix(prob: &BalancingProblem, state: &ScalingState) -> Result<NonnegMatrix, ModelError> {
    scaled_matrix_raw(prob.matrix(), &state.d0, &state.d1)
}

pub(crate) fn scaled_matrix_raw(
    a: &NonnegMatrix,
    d0: &[f64],
    d1: &[f64],
) -> Result<NonnegMatrix, ModelError> {
    if d0.len() != a.n_cols() {
        return Err(ModelError::DimensionMismatch {
            expected: a.n_cols(),
            got: d0.len(),
            context: "d0",
        });
    }
    if d1.len() != a.n_rows() {
        return Err(ModelError::DimensionMismatch {
            expected: a.n_rows(),
            got: d1.len(),
            context: "d1",
        });
    }
    // Entries far outside the representable product range go through logs so
    // that a bounded Â survives diverging scaling pairs.
    let robust = d0.iter().chain(d1).any(|&x| !(1e-100..=1e100).contains(&x));
    let mut out = a.clone();
    for i in 0..a.n_rows() {
        let lo = out.row_ptr[i];
        let hi = out.row_ptr[i + 1];
        for k in lo..hi {
            let j = out.col_idx[k];
            out.values[k] = if robust {
                (d1[i].ln() + out.values[k].ln() + d0[j].ln()).exp()
            } else {
                d1[i] * out.values[k] * d0[j]
            };
        }
    }
    Ok(out)
}

/// Row/column sums of `Â` plus the four error metrics against `(p, q)`.
pub fn marginals(prob: &BalancingProblem, state: &ScalingState) -> Result<MarginalSnapshot, ModelError> {
    let ahat = scaled_matrix(prob, state)?;
    let row_sums = ahat.row_sums();
    let col_sums = ahat.col_sums();
    let l1_row_err = l1_distance(prob.p(), &row_sums);
    let l1_col_err = l1_distance(prob.q(), &col_sums);
    let kl_row = kl_divergence(prob.p(), &row_sums);
    let kl_col = kl_divergence(prob.q(), &col_sums);
    Ok(MarginalSnapshot {
        row_sums,
        col_sums,
        l1_row_err,
        l1_col_err,
        kl_row,
        kl_col,
    })
}
