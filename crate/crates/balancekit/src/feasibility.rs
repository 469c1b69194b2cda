//! Certification of the existence and uniqueness conditions, on both sides of
//! the reduction: max-flow existence checks on `(A, p, q)` with an exact
//! integer path for count data, and connectivity checks on the choice side.
//!
//! Weak existence holds iff the bipartite flow network (source→rows at
//! capacity `p`, support edges at infinite capacity, columns→sink at capacity
//! `q`) carries the full mass `Σp`. Strong existence additionally requires
//! every support edge to admit positive flow in some maximum flow, decided by
//! a residual-SCC test after a single flow computation instead of per-edge
//! re-solves.

use crate::choice::{ChoiceError, ReducedDataset};
use crate::model::{BalancingProblem, NonnegMatrix};
use serde::Serialize;

/// Predicted solver behavior for a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Finite positive scalings exist and are unique modulo gauge; Sinkhorn
    /// converges linearly.
    DirectScaling,
    /// Scaled matrices converge but the scalings diverge; convergence is
    /// sublinear.
    LimitScaling,
    /// No matrix with the prescribed marginals inherits the zeros of `A`.
    Infeasible,
    /// Scalings exist but are not unique (decomposable `A`).
    NonUnique,
}

/// A set pair `(N, M)` certifying an existence verdict: columns in `M` are
/// supported only by rows in `N`, and `Σ_N p` versus `Σ_M q` violates (or
/// meets with equality) the required inequality. For strong-existence
/// failures, `forced_zero_edge` names a support entry that carries no flow in
/// any feasible plan.
#[derive(Debug, Clone, Serialize)]
pub struct ExistenceWitness {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forced_zero_edge: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceVerdict {
    pub weak: bool,
    pub strong: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ExistenceWitness>,
}

/// Full feasibility verdict combining uniqueness and existence.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityVerdict {
    pub uniqueness: bool,
    pub weak_existence: bool,
    pub strong_existence: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ExistenceWitness>,
    pub regime: Regime,
}

/// Uniqueness of scalings modulo gauge: holds iff the bipartite graph of `A`
/// is connected, i.e. `A` is not permutation-equivalent to a block-diagonal
/// matrix.
pub fn check_uniqueness(a: &NonnegMatrix) -> bool {
    let n = a.n_rows();
    let m = a.n_cols();
    let mut cols_of_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut rows_of_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, j, _) in a.triplets() {
        cols_of_rows[i].push(j);
        rows_of_cols[j].push(i);
    }
    let mut seen = vec![false; n + m];
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

// ---------------------------------------------------------------------------
// Max-flow machinery. Capacities are either exact integers (choice data) or
// floats with a relative slack; the equality-versus-strict distinction in the
// existence conditions is knife-edge, so integer inputs get exact arithmetic.

trait Capacity: Copy + PartialOrd + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> {
    const ZERO: Self;
    fn usable(self, eps: Self) -> bool;
    fn min2(self, other: Self) -> Self;
}

impl Capacity for i128 {
    const ZERO: i128 = 0;
    fn usable(self, _eps: i128) -> bool {
        self > 0
    }
    fn min2(self, other: i128) -> i128 {
        self.min(other)
    }
}

impl Capacity for f64 {
    const ZERO: f64 = 0.0;
    fn usable(self, eps: f64) -> bool {
        self > eps
    }
    fn min2(self, other: f64) -> f64 {
        self.min(other)
    }
}

/// Dinic's algorithm over paired residual edges; `cap` holds the residual
/// capacity of each directed edge, with edge `e` and its reverse at `e ^ 1`.
struct FlowNetwork<C: Capacity> {
    n: usize,
    to: Vec<usize>,
    cap: Vec<C>,
    adj: Vec<Vec<usize>>,
    eps: C,
}

impl<C: Capacity> FlowNetwork<C> {
    fn new(n: usize, eps: C) -> Self {
        Self {
            n,
            to: Vec::new(),
            cap: Vec::new(),
            adj: vec![Vec::new(); n],
            eps,
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: C) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(cap);
        self.adj[u].push(e);
        self.to.push(u);
        self.cap.push(C::ZERO);
        self.adj[v].push(e + 1);
        e
    }

    /// Flow currently carried by edge `e` (residual of its reverse).
    fn flow(&self, e: usize) -> C {
        self.cap[e ^ 1]
    }

    fn bfs_levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1; self.n];
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if level[v] < 0 && self.cap[e].usable(self.eps) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    fn dfs_augment(
        &mut self,
        u: usize,
        t: usize,
        pushed: C,
        level: &[i32],
        iter: &mut [usize],
    ) -> Option<C> {
        if u == t {
            return Some(pushed);
        }
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.to[e];
            if level[v] == level[u] + 1 && self.cap[e].usable(self.eps) {
                if let Some(d) = self.dfs_augment(v, t, pushed.min2(self.cap[e]), level, iter) {
                    self.cap[e] = self.cap[e] - d;
                    self.cap[e ^ 1] = self.cap[e ^ 1] + d;
                    return Some(d);
                }
            }
            iter[u] += 1;
        }
        None
    }

    fn max_flow(&mut self, s: usize, t: usize, infinity: C) -> C {
        let mut total = C::ZERO;
        while let Some(level) = self.bfs_levels(s, t) {
            let mut iter = vec![0usize; self.n];
            while let Some(d) = self.dfs_augment(s, t, infinity, &level, &mut iter) {
                total = total + d;
            }
        }
        total
    }

    /// Nodes reachable from `from` through usable residual edges.
    fn residual_reachable(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if !seen[v] && self.cap[e].usable(self.eps) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Strongly connected components of the usable-residual digraph
    /// (Kosaraju).
    fn residual_sccs(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n);
        let mut seen = vec![false; self.n];
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            // Iterative post-order DFS.
            let mut stack = vec![(start, 0usize)];
            seen[start] = true;
            while let Some(&mut (u, ref mut idx)) = stack.last_mut() {
                if *idx < self.adj[u].len() {
                    let e = self.adj[u][*idx];
                    *idx += 1;
                    let v = self.to[e];
                    if !seen[v] && self.cap[e].usable(self.eps) {
                        seen[v] = true;
                        stack.push((v, 0));
                    }
                } else {
                    order.push(u);
                    stack.pop();
                }
            }
        }
        // Transposed adjacency.
        let mut radj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for u in 0..self.n {
            for &e in &self.adj[u] {
                if self.cap[e].usable(self.eps) {
                    radj[self.to[e]].push(u);
                }
            }
        }
        let mut comp = vec![usize::MAX; self.n];
        let mut current = 0;
        for &start in order.iter().rev() {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = current;
            while let Some(u) = stack.pop() {
                for &v in &radj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = current;
                        stack.push(v);
                    }
                }
            }
            current += 1;
        }
        comp
    }
}

fn all_integral(values: &[f64]) -> bool {
    values
        .iter()
        .all(|&x| x.fract() == 0.0 && x.abs() < 9e15)
}

struct FlowOutcome {
    weak: bool,
    strong: bool,
    witness: Option<ExistenceWitness>,
}

fn existence_via_flow<C: Capacity>(
    prob: &BalancingProblem,
    p: &[C],
    q: &[C],
    sum_p: C,
    infinity: C,
    eps: C,
    weak_slack: C,
) -> FlowOutcome {
    let n = prob.n_rows();
    let m = prob.n_cols();
    // Node layout: 0 = source, 1 = sink, 2.. rows, 2+n.. columns.
    let source = 0;
    let sink = 1;
    let row_node = |i: usize| 2 + i;
    let col_node = |j: usize| 2 + n + j;

    let mut net = FlowNetwork::new(2 + n + m, eps);
    for (i, &cap) in p.iter().enumerate() {
        net.add_edge(source, row_node(i), cap);
    }
    let mut support_edges = Vec::with_capacity(prob.matrix().nnz());
    for (i, j, _) in prob.matrix().triplets() {
        let e = net.add_edge(row_node(i), col_node(j), infinity);
        support_edges.push((i, j, e));
    }
    for (j, &cap) in q.iter().enumerate() {
        net.add_edge(col_node(j), sink, cap);
    }

    let value = net.max_flow(source, sink, infinity);
    if value + weak_slack < sum_p {
        // Min-cut witness: rows and columns unreachable from the source.
        let reach = net.residual_reachable(source);
        let rows: Vec<usize> = (0..n).filter(|&i| !reach[row_node(i)]).collect();
        let cols: Vec<usize> = (0..m).filter(|&j| !reach[col_node(j)]).collect();
        return FlowOutcome {
            weak: false,
            strong: false,
            witness: Some(ExistenceWitness {
                rows,
                cols,
                forced_zero_edge: None,
            }),
        };
    }

    // Weak existence holds. A support edge admits positive flow in some
    // maximum flow iff it already carries flow or closes a residual cycle.
    let comp = net.residual_sccs();
    for &(i, j, e) in &support_edges {
        let carries = net.flow(e).usable(eps);
        if carries || comp[row_node(i)] == comp[col_node(j)] {
            continue;
        }
        // Forced-zero edge: build the equality witness from the residual
        // nodes reachable from its column endpoint.
        let reach = net.residual_reachable(col_node(j));
        let rows: Vec<usize> = (0..n).filter(|&r| !reach[row_node(r)]).collect();
        let cols: Vec<usize> = (0..m).filter(|&c| !reach[col_node(c)]).collect();
        return FlowOutcome {
            weak: true,
            strong: false,
            witness: Some(ExistenceWitness {
                rows,
                cols,
                forced_zero_edge: Some((i, j)),
            }),
        };
    }
    FlowOutcome {
        weak: true,
        strong: true,
        witness: None,
    }
}

/// Decides weak and strong existence for `(A, p, q)`. Integer marginals are
/// solved exactly; floats use a `1e-9·Σp` slack on the flow value.
pub fn check_existence(prob: &BalancingProblem) -> ExistenceVerdict {
    let outcome = if all_integral(prob.p()) && all_integral(prob.q()) {
        let p: Vec<i128> = prob.p().iter().map(|&x| x as i128).collect();
        let q: Vec<i128> = prob.q().iter().map(|&x| x as i128).collect();
        let sum_p: i128 = p.iter().sum();
        existence_via_flow(prob, &p, &q, sum_p, sum_p + 1, 0, 0)
    } else {
        let sum_p: f64 = prob.p().iter().sum();
        existence_via_flow(
            prob,
            prob.p(),
            prob.q(),
            sum_p,
            2.0 * sum_p,
            1e-12 * sum_p,
            1e-9 * sum_p,
        )
    };
    ExistenceVerdict {
        weak: outcome.weak,
        strong: outcome.strong,
        witness: outcome.witness,
    }
}

/// Combined verdict with the regime classification.
pub fn feasibility_verdict(prob: &BalancingProblem) -> FeasibilityVerdict {
    let uniqueness = check_uniqueness(prob.matrix());
    let existence = check_existence(prob);
    let regime = if !existence.weak {
        Regime::Infeasible
    } else if !existence.strong {
        Regime::LimitScaling
    } else if uniqueness {
        Regime::DirectScaling
    } else {
        Regime::NonUnique
    };
    FeasibilityVerdict {
        uniqueness,
        weak_existence: existence.weak,
        strong_existence: existence.strong,
        witness: existence.witness,
        regime,
    }
}

/// Connectivity of a choice dataset: `strong` requires the directed
/// comparison graph (edge `j → k` iff `k` is selected from a set containing
/// `j`) to be a single strongly connected component covering all items;
/// `weak` requires the undirected co-occurrence graph to be connected.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChoiceConnectivity {
    pub strong: bool,
    pub weak: bool,
}

pub fn check_choice_connectivity(
    dataset: &ReducedDataset,
) -> Result<ChoiceConnectivity, ChoiceError> {
    let m = dataset.n_items();
    if dataset.selections().is_empty() {
        return Err(ChoiceError::EmptyDataset);
    }

    // Directed comparison graph.
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); m];
    for sel in dataset.selections() {
        if sel.count <= 0.0 {
            continue;
        }
        for &j in &dataset.unique_sets()[sel.set] {
            if j != sel.item {
                out[j].push(sel.item);
            }
        }
    }
    for o in &mut out {
        o.sort_unstable();
        o.dedup();
    }
    let strong = single_scc(&out);

    // Undirected co-occurrence graph.
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for set in dataset.unique_sets() {
        for w in set.windows(2) {
            let a = find(&mut parent, w[0]);
            let b = find(&mut parent, w[1]);
            parent[a] = b;
        }
    }
    let root = find(&mut parent, 0);
    let weak = (0..m).all(|j| find(&mut parent, j) == root);

    Ok(ChoiceConnectivity { strong, weak })
}

fn single_scc(out: &[Vec<usize>]) -> bool {
    let m = out.len();
    if m == 0 {
        return false;
    }
    let reach = |adj: &dyn Fn(usize) -> Vec<usize>| -> bool {
        let mut seen = vec![false; m];
        seen[0] = true;
        let mut stack = vec![0usize];
        while let Some(u) = stack.pop() {
            for v in adj(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    let forward = reach(&|u| out[u].clone());
    let mut rin: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (u, vs) in out.iter().enumerate() {
        for &v in vs {
            rin[v].push(u);
        }
    }
    forward && reach(&|u| rin[u].clone())
}

/// Verdicts on both sides of the reduction, and whether they agree as the
/// equivalence statement requires: strong connectivity iff strong existence
/// plus uniqueness, and weak connectivity iff uniqueness.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub choice_strong: bool,
    pub choice_weak: bool,
    pub matrix_strong_existence: bool,
    pub matrix_uniqueness: bool,
    pub agree: bool,
}

/// Cross-checks the choice-side connectivity verdicts against the
/// matrix-side existence and uniqueness verdicts of the reduced problem.
/// Requires every item to have won at least once (`q > 0`).
pub fn cross_check_equivalence(dataset: &ReducedDataset) -> Result<EquivalenceReport, ChoiceError> {
    if dataset.wins().iter().any(|&w| w <= 0.0) {
        return Err(ChoiceError::InvalidObservation(
            "equivalence cross-check requires every item to win at least once".into(),
        ));
    }
    let connectivity = check_choice_connectivity(dataset)?;
    let prob = crate::choice::to_balancing_problem(dataset)?;
    let uniqueness = check_uniqueness(prob.matrix());
    let existence = check_existence(&prob);
    let agree = (connectivity.strong == (existence.strong && uniqueness))
        && (connectivity.weak == uniqueness);
    Ok(EquivalenceReport {
        choice_strong: connectivity.strong,
        choice_weak: connectivity.weak,
        matrix_strong_existence: existence.strong,
        matrix_uniqueness: uniqueness,
        agree,
    })
}
