//! Choice-data ingestion and Luce model estimation by reduction to matrix
//! balancing: observations `(chosen, choice set)` reduce to a binary
//! participation matrix with multiplicities as row targets and win counts as
//! column targets, and Sinkhorn's iteration computes the MLE. The classical
//! updates (Zermelo/Ford pairwise, Hunter MM for rankings, ChoiceRank on
//! transition graphs) are provided as independently-computed oracles; each is
//! algebraically one full Sinkhorn step on its mapped dataset.

use crate::balancing::{self, BalancingError, SinkhornConfig, StopMetric};
use crate::model::{BalancingProblem, ModelError, NonnegMatrix};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChoiceError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("duplicate item {0} in ranking")]
    DuplicateItem(String),
    #[error("dataset contains no observations")]
    EmptyDataset,
    #[error("dataset is infeasible for unregularized estimation: {0}")]
    InfeasibleDataset(String),
    #[error("estimation did not converge (foc residual {foc_residual:e} after {iterations} iterations)")]
    NotConverged { foc_residual: f64, iterations: usize },
    #[error("node {0} has no incident transitions")]
    IsolatedNode(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Balancing(#[from] BalancingError),
}

/// One raw observation: a choice set of at least two distinct items and the
/// item selected from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceObservation {
    pub chosen: String,
    pub choice_set: Vec<String>,
}

impl ChoiceObservation {
    pub fn new<S: Into<String>>(chosen: S, choice_set: Vec<S>) -> Self {
        Self {
            chosen: chosen.into(),
            choice_set: choice_set.into_iter().map(Into::into).collect(),
        }
    }
}

/// A grouped selection: `count` observations chose `item` out of
/// `unique_sets[set]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub set: usize,
    pub item: usize,
    pub count: f64,
}

/// Deduplicated dataset: unique choice sets with multiplicities `R`, per-item
/// win counts `W`, and the grouped selections that tie wins to sets. Counts
/// are kept as `f64` so that data augmentation may add fractional mass;
/// ingestion always produces integers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedDataset {
    items: Vec<String>,
    unique_sets: Vec<Vec<usize>>,
    multiplicities: Vec<f64>,
    wins: Vec<f64>,
    selections: Vec<Selection>,
}

impl ReducedDataset {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_sets(&self) -> usize {
        self.unique_sets.len()
    }

    /// Total number of observations `Σ R = Σ W`.
    pub fn n_observations(&self) -> f64 {
        self.multiplicities.iter().sum()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    pub fn unique_sets(&self) -> &[Vec<usize>] {
        &self.unique_sets
    }

    pub fn multiplicities(&self) -> &[f64] {
        &self.multiplicities
    }

    pub fn wins(&self) -> &[f64] {
        &self.wins
    }

    pub fn selections(&self) -> &[Selection] {
        &self.selections
    }

    pub(crate) fn from_parts(
        items: Vec<String>,
        sets_with_selections: BTreeMap<Vec<usize>, BTreeMap<usize, f64>>,
    ) -> Result<Self, ChoiceError> {
        let mut unique_sets = Vec::new();
        let mut multiplicities = Vec::new();
        let mut wins = vec![0.0; items.len()];
        let mut selections = Vec::new();
        for (set, chosen_counts) in sets_with_selections {
            let set_idx = unique_sets.len();
            let mut r = 0.0;
            for (&item, &count) in &chosen_counts {
                if !set.contains(&item) {
                    return Err(ChoiceError::InvalidObservation(format!(
                        "chosen item index {item} is not in its choice set"
                    )));
                }
                if count <= 0.0 {
                    continue;
                }
                r += count;
                wins[item] += count;
                selections.push(Selection {
                    set: set_idx,
                    item,
                    count,
                });
            }
            if r <= 0.0 {
                return Err(ChoiceError::InvalidObservation(
                    "choice set with no selections".into(),
                ));
            }
            unique_sets.push(set);
            multiplicities.push(r);
        }
        if unique_sets.is_empty() {
            return Err(ChoiceError::EmptyDataset);
        }
        let mut in_some_set = vec![false; items.len()];
        for set in &unique_sets {
            for &j in set {
                in_some_set[j] = true;
            }
        }
        if let Some(j) = in_some_set.iter().position(|&x| !x) {
            return Err(ChoiceError::InvalidObservation(format!(
                "item {} appears in no choice set",
                items[j]
            )));
        }
        Ok(Self {
            items,
            unique_sets,
            multiplicities,
            wins,
            selections,
        })
    }
}

/// Deduplicates observations into a [`ReducedDataset`]. Items are indexed in
/// lexicographic id order and sets are sorted by their canonical item tuple,
/// so the result is independent of observation order.
pub fn reduce(observations: &[ChoiceObservation]) -> Result<ReducedDataset, ChoiceError> {
    if observations.is_empty() {
        return Err(ChoiceError::EmptyDataset);
    }
    let mut ids: Vec<&str> = Vec::new();
    for obs in observations {
        for id in &obs.choice_set {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    ids.dedup();
    let items: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut grouped: BTreeMap<Vec<usize>, BTreeMap<usize, f64>> = BTreeMap::new();
    for obs in observations {
        let mut set: Vec<usize> = obs.choice_set.iter().map(|id| index[id.as_str()]).collect();
        set.sort_unstable();
        set.dedup();
        if set.len() < 2 {
            return Err(ChoiceError::InvalidObservation(format!(
                "choice set {:?} has fewer than 2 distinct items",
                obs.choice_set
            )));
        }
        let chosen = *index.get(obs.chosen.as_str()).ok_or_else(|| {
            ChoiceError::InvalidObservation(format!("chosen item {} unknown", obs.chosen))
        })?;
        if !set.contains(&chosen) {
            return Err(ChoiceError::InvalidObservation(format!(
                "chosen item {} is not in its choice set",
                obs.chosen
            )));
        }
        *grouped.entry(set).or_default().entry(chosen).or_insert(0.0) += 1.0;
    }
    ReducedDataset::from_parts(items, grouped)
}

/// Decomposes a strict ranking `a₁ ≻ … ≻ a_l` into the `l − 1` observations
/// `(a_k, {a_k, …, a_l})`.
pub fn decompose_ranking(ranking: &[String]) -> Result<Vec<ChoiceObservation>, ChoiceError> {
    if ranking.len() < 2 {
        return Err(ChoiceError::InvalidObservation(format!(
            "ranking needs at least 2 items, got {}",
            ranking.len()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for id in ranking {
        if !seen.insert(id) {
            return Err(ChoiceError::DuplicateItem(id.clone()));
        }
    }
    Ok((0..ranking.len() - 1)
        .map(|k| ChoiceObservation {
            chosen: ranking[k].clone(),
            choice_set: ranking[k..].to_vec(),
        })
        .collect())
}

/// The reduction: binary participation matrix `A_ij = 1{j ∈ S_i}`, row
/// targets `p = R`, column targets `q = W`. Items that never win produce
/// `q_j = 0`; the problem is built through the zero-tolerant constructor and
/// rejected later by the unregularized paths.
pub fn to_balancing_problem(reduced: &ReducedDataset) -> Result<BalancingProblem, ChoiceError> {
    let mut triplets = Vec::new();
    for (i, set) in reduced.unique_sets.iter().enumerate() {
        for &j in set {
            triplets.push((i, j, 1.0));
        }
    }
    let a = NonnegMatrix::from_triplets(reduced.n_sets(), reduced.n_items(), &triplets)?;
    Ok(BalancingProblem::with_nonneg_cols(
        a,
        reduced.multiplicities.clone(),
        reduced.wins.clone(),
    )?)
}

/// Score normalization convention for reported estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `Σ s = 1` (simplex).
    SimplexSum1,
    /// `Σ s = m`, the convention used when comparing iterative estimators on
    /// log-scale parameters.
    SumM,
}

#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub normalization: Normalization,
    /// Target bound on the first-order-condition residual.
    pub foc_tol: f64,
    pub max_iterations: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            normalization: Normalization::SimplexSum1,
            foc_tol: 1e-9,
            max_iterations: 100_000,
        }
    }
}

/// A fitted Luce model.
#[derive(Debug, Clone, Serialize)]
pub struct LuceEstimate {
    pub item_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub normalization: Normalization,
    pub log_likelihood: f64,
    /// Max elementwise violation of the optimality condition
    /// `W_j = Σ_{i: j∈S_i} R_i·s_j/Σ_{k∈S_i} s_k` (for MAP estimates, its
    /// regularized analogue at the unnormalized fixed point).
    pub foc_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn normalize_scores(mut s: Vec<f64>, normalization: Normalization) -> Vec<f64> {
    let sum: f64 = s.iter().sum();
    let target = match normalization {
        Normalization::SimplexSum1 => 1.0,
        Normalization::SumM => s.len() as f64,
    };
    s.iter_mut().for_each(|x| *x *= target / sum);
    s
}

/// Log-likelihood `Σ_j W_j ln s_j − Σ_i R_i ln Σ_{k∈S_i} s_k`; invariant
/// under rescaling of `s` because `Σ W = Σ R`.
pub fn log_likelihood(reduced: &ReducedDataset, s: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (j, &w) in reduced.wins.iter().enumerate() {
        if w > 0.0 {
            ll += w * s[j].ln();
        }
    }
    for (i, set) in reduced.unique_sets.iter().enumerate() {
        let denom: f64 = set.iter().map(|&k| s[k]).sum();
        ll -= reduced.multiplicities[i] * denom.ln();
    }
    ll
}

fn expected_wins(reduced: &ReducedDataset, s: &[f64]) -> Vec<f64> {
    let mut expected = vec![0.0; reduced.n_items()];
    for (i, set) in reduced.unique_sets.iter().enumerate() {
        let denom: f64 = set.iter().map(|&k| s[k]).sum();
        let r = reduced.multiplicities[i];
        for &j in set {
            expected[j] += r * s[j] / denom;
        }
    }
    expected
}

/// Max elementwise violation of the optimality condition at `s`.
pub fn foc_residual(reduced: &ReducedDataset, s: &[f64]) -> f64 {
    expected_wins(reduced, s)
        .iter()
        .zip(&reduced.wins)
        .map(|(e, w)| (e - w).abs())
        .fold(0.0, f64::max)
}

/// One full Sinkhorn iteration expressed on the scores,
/// `s'_j = W_j / Σ_{i: j∈S_i} R_i/Σ_{k∈S_i} s_k`, computed through the row
/// and column half-steps of the balancing problem.
pub fn scaling_iteration(reduced: &ReducedDataset, s: &[f64]) -> Result<Vec<f64>, ChoiceError> {
    let prob = to_balancing_problem(reduced)?;
    let state = crate::model::ScalingState::new(s.to_vec(), vec![1.0; prob.n_rows()])?;
    let state = balancing::sinkhorn_half_step_row(&prob, &state)?;
    let state = balancing::sinkhorn_half_step_col(&prob, &state)?;
    Ok(state.d0)
}

/// Maximum likelihood estimation via Sinkhorn. Requires strong connectivity
/// of the directed comparison graph; datasets failing it are rejected with a
/// pointer to the regularized and data-augmented paths.
pub fn estimate_mle(
    reduced: &ReducedDataset,
    config: &EstimateConfig,
) -> Result<LuceEstimate, ChoiceError> {
    let connectivity = crate::feasibility::check_choice_connectivity(reduced)?;
    if !connectivity.strong {
        return Err(ChoiceError::InfeasibleDataset(
            "directed comparison graph is not strongly connected; \
             use estimate_regularized or augment_data"
                .into(),
        ));
    }
    let prob = to_balancing_problem(reduced)?;

    let mut d0: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut foc = f64::INFINITY;
    for attempt in 0i32..3 {
        let mut cfg = SinkhornConfig::plain()
            .with_tol(config.foc_tol * 10f64.powi(-attempt - 1))
            .with_max_iterations(config.max_iterations);
        if let Some(seed) = d0.take() {
            cfg = cfg.with_initial_d0(seed);
        }
        let (state, report) = balancing::run(&prob, &cfg)?;
        iterations += report.iterations;
        foc = foc_residual(reduced, &state.d0);
        d0 = Some(state.d0);
        if foc <= config.foc_tol {
            break;
        }
    }
    let d0 = d0.unwrap();
    if foc > config.foc_tol {
        return Err(ChoiceError::NotConverged {
            foc_residual: foc,
            iterations,
        });
    }
    let scores = normalize_scores(d0, config.normalization);
    Ok(LuceEstimate {
        item_ids: reduced.items.clone(),
        scores: scores.clone(),
        normalization: config.normalization,
        log_likelihood: log_likelihood(reduced, &scores),
        foc_residual: foc,
        iterations,
        converged: true,
    })
}

/// MAP estimation under independent Gamma(α, β) priors; well-posed for any
/// dataset, including ones where some item never wins.
pub fn estimate_regularized(
    reduced: &ReducedDataset,
    alpha: f64,
    beta: f64,
    config: &EstimateConfig,
) -> Result<LuceEstimate, ChoiceError> {
    let prob = to_balancing_problem(reduced)?;
    let cfg = SinkhornConfig::regularized(alpha, beta)
        .with_tol(config.foc_tol.min(1e-10))
        .with_max_iterations(config.max_iterations)
        .with_stop_metric(StopMetric::MaxScalingUpdate);
    let (state, report) = balancing::run(&prob, &cfg)?;

    // Regularized first-order condition at the raw fixed-point scale:
    // W_j + α − 1 = Σ_{i: j∈S_i} R_i·s_j/Σ_k s_k + β·s_j.
    let expected = expected_wins(reduced, &state.d0);
    let reg_foc = expected
        .iter()
        .zip(&reduced.wins)
        .zip(&state.d0)
        .map(|((e, w), s)| (w + alpha - 1.0 - e - beta * s).abs())
        .fold(0.0, f64::max);

    let scores = normalize_scores(state.d0, config.normalization);
    Ok(LuceEstimate {
        item_ids: reduced.items.clone(),
        scores: scores.clone(),
        normalization: config.normalization,
        log_likelihood: log_likelihood(reduced, &scores),
        foc_residual: reg_foc,
        iterations: report.iterations,
        converged: report.converged(),
    })
}

/// Data augmentation: ensure a full choice set over all items exists, add
/// `m·eps` to its multiplicity, and credit every item `eps` extra wins. The
/// output always satisfies strong connectivity.
pub fn augment_data(reduced: &ReducedDataset, eps: f64) -> Result<ReducedDataset, ChoiceError> {
    if !(eps > 0.0) {
        return Err(ChoiceError::InvalidObservation(format!(
            "augmentation mass must be positive, got {eps}"
        )));
    }
    let m = reduced.n_items();
    let full_set: Vec<usize> = (0..m).collect();
    let mut grouped: BTreeMap<Vec<usize>, BTreeMap<usize, f64>> = BTreeMap::new();
    for sel in &reduced.selections {
        grouped
            .entry(reduced.unique_sets[sel.set].clone())
            .or_default()
            .insert(sel.item, sel.count);
    }
    let full = grouped.entry(full_set).or_default();
    for j in 0..m {
        *full.entry(j).or_insert(0.0) += eps;
    }
    let out = ReducedDataset::from_parts(reduced.items.clone(), grouped)?;
    debug_assert!(crate::feasibility::check_choice_connectivity(&out)
        .map(|c| c.strong)
        .unwrap_or(false));
    Ok(out)
}

/// One Hunter MM iteration for Plackett–Luce rankings, computed directly
/// from the ranking form: the denominator for item `k` sums, over rankings
/// and positions where `k` ranks no better, the inverse of the tail score
/// sum; `w_k` counts rankings where `k` appears and is not last. Rankings
/// are sequences of item indices into `s`.
pub fn mm_update(rankings: &[Vec<usize>], s: &[f64]) -> Result<Vec<f64>, ChoiceError> {
    if rankings.is_empty() {
        return Err(ChoiceError::EmptyDataset);
    }
    let m = s.len();
    let mut wins = vec![0.0f64; m];
    let mut denom = vec![0.0f64; m];
    for ranking in rankings {
        let l = ranking.len();
        if l < 2 {
            return Err(ChoiceError::InvalidObservation(
                "ranking needs at least 2 items".into(),
            ));
        }
        // Tail sums Σ_{j' ≥ j} s_{a(j')}.
        let mut tail = vec![0.0; l + 1];
        for j in (0..l).rev() {
            tail[j] = tail[j + 1] + s[ranking[j]];
        }
        for (pos, &k) in ranking.iter().enumerate() {
            if pos < l - 1 {
                wins[k] += 1.0;
            }
            for t in tail.iter().take(pos.min(l - 2) + 1) {
                denom[k] += 1.0 / t;
            }
        }
    }
    Ok((0..m)
        .map(|k| if denom[k] > 0.0 { wins[k] / denom[k] } else { s[k] })
        .collect())
}

/// One Zermelo/Ford/Dykstra update for pairwise data:
/// `s'_j = W_j / Σ_{k≠j} C_jk/(s_j + s_k)` with `C` the symmetric comparison
/// count matrix and `W` the win counts.
pub fn pairwise_update(comparisons: &[Vec<f64>], wins: &[f64], s: &[f64]) -> Vec<f64> {
    let m = s.len();
    (0..m)
        .map(|j| {
            let denom: f64 = (0..m)
                .filter(|&k| k != j)
                .map(|k| comparisons[j][k] / (s[j] + s[k]))
                .sum();
            if denom > 0.0 {
                wins[j] / denom
            } else {
                s[j]
            }
        })
        .collect()
}

/// Per-edge transition counts on a directed graph; nodes are `0..n_nodes`.
/// An edge may carry zero observed transitions and still shape the choice
/// sets.
#[derive(Debug, Clone)]
pub struct TransitionCounts {
    pub n_nodes: usize,
    /// `(from, to, count)` with `count ≥ 0`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl TransitionCounts {
    fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes];
        for &(u, v, _) in &self.edges {
            out[u].push(v);
        }
        for o in &mut out {
            o.sort_unstable();
            o.dedup();
        }
        out
    }

    fn in_neighbors(&self) -> Vec<Vec<usize>> {
        let mut inn = vec![Vec::new(); self.n_nodes];
        for &(u, v, _) in &self.edges {
            inn[v].push(u);
        }
        for i in &mut inn {
            i.sort_unstable();
            i.dedup();
        }
        inn
    }

    fn out_counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_nodes];
        for &(u, _, w) in &self.edges {
            c[u] += w;
        }
        c
    }

    fn in_counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_nodes];
        for &(_, v, w) in &self.edges {
            c[v] += w;
        }
        c
    }
}

/// One unregularized ChoiceRank iteration:
/// `γ_j = c_j^out/Σ_{k∈N_j^out} s_k`, then `s'_j = c_j^in/Σ_{k∈N_j^in} γ_k`.
pub fn choicerank_update(graph: &TransitionCounts, s: &[f64]) -> Result<Vec<f64>, ChoiceError> {
    let out_nbrs = graph.out_neighbors();
    let in_nbrs = graph.in_neighbors();
    let c_out = graph.out_counts();
    let c_in = graph.in_counts();
    for v in 0..graph.n_nodes {
        if out_nbrs[v].is_empty() && in_nbrs[v].is_empty() {
            return Err(ChoiceError::IsolatedNode(v));
        }
    }
    let gamma: Vec<f64> = (0..graph.n_nodes)
        .map(|j| {
            if out_nbrs[j].is_empty() {
                0.0
            } else {
                c_out[j] / out_nbrs[j].iter().map(|&k| s[k]).sum::<f64>()
            }
        })
        .collect();
    Ok((0..graph.n_nodes)
        .map(|j| {
            let denom: f64 = in_nbrs[j].iter().map(|&k| gamma[k]).sum();
            if denom > 0.0 {
                c_in[j] / denom
            } else {
                s[j]
            }
        })
        .collect())
}

/// The network choice model as a Luce dataset: every node with outgoing
/// transitions contributes its out-neighborhood as a choice set, and each
/// transition along an edge is one selection of the edge's head.
pub fn network_to_dataset(graph: &TransitionCounts) -> Result<ReducedDataset, ChoiceError> {
    let out_nbrs = graph.out_neighbors();
    let items: Vec<String> = (0..graph.n_nodes).map(|v| format!("{v:04}")).collect();
    let mut grouped: BTreeMap<Vec<usize>, BTreeMap<usize, f64>> = BTreeMap::new();
    for &(u, v, w) in &graph.edges {
        if w > 0.0 {
            *grouped
                .entry(out_nbrs[u].clone())
                .or_default()
                .entry(v)
                .or_insert(0.0) += w;
        }
    }
    if grouped.is_empty() {
        return Err(ChoiceError::EmptyDataset);
    }
    ReducedDataset::from_parts(items, grouped)
}
