//! EM for finite mixtures of Luce choice models. The E-step computes
//! posterior component memberships in log space; the M-step splits into a
//! closed-form weight update and one matrix balancing problem per component,
//! each solved with Sinkhorn on responsibility-weighted marginals.
//!
//! Responsibilities are attached to grouped observations (identical
//! `(set, chosen)` pairs share one posterior), which aggregates exactly.

use crate::balancing::{self, SinkhornConfig};
use crate::choice::{ChoiceError, ReducedDataset};
use crate::model::{BalancingProblem, NonnegMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("component count must be at least 1")]
    NoComponents,
    #[error("component {component} failed to converge in the M-step")]
    NotConverged { component: usize },
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Balancing(#[from] balancing::BalancingError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// `r` quality vectors on the simplex with mixture weights.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    /// Components whose weighted win counts starved during the last M-step
    /// and were solved with the regularized variant.
    pub regularized_components: Vec<bool>,
}

impl MixtureModel {
    pub fn r(&self) -> usize {
        self.weights.len()
    }
}

/// Posterior membership probabilities, one row per grouped observation,
/// aligned with `ReducedDataset::selections`.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    pub w: Vec<Vec<f64>>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Bayes posteriors `w_{gℓ} ∝ p_ℓ · s^ℓ_{j_g} / Σ_{k∈S_g} s^ℓ_k`, computed in
/// log space and row-normalized.
pub fn e_step(dataset: &ReducedDataset, model: &MixtureModel) -> Responsibilities {
    let r = model.r();
    let log_weights: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let log_set_sums: Vec<Vec<f64>> = (0..r)
        .map(|l| {
            dataset
                .unique_sets()
                .iter()
                .map(|set| set.iter().map(|&k| model.components[l][k]).sum::<f64>().ln())
                .collect()
        })
        .collect();
    let w = dataset
        .selections()
        .iter()
        .map(|sel| {
            let logs: Vec<f64> = (0..r)
                .map(|l| {
                    log_weights[l] + model.components[l][sel.item].ln()
                        - log_set_sums[l][sel.set]
                })
                .collect();
            let lse = log_sum_exp(&logs);
            logs.iter().map(|x| (x - lse).exp()).collect()
        })
        .collect();
    Responsibilities { w }
}

fn simplex_normalize(mut s: Vec<f64>) -> Vec<f64> {
    let sum: f64 = s.iter().sum();
    s.iter_mut().for_each(|x| *x /= sum);
    s
}

/// Closed-form weight update plus one responsibility-weighted balancing
/// problem per component. Components whose weighted win counts hit zero for
/// some item are solved with the regularized variant (`α = 1 + 1e-3`,
/// `β = m·1e-3`) and flagged.
pub fn m_step(
    dataset: &ReducedDataset,
    responsibilities: &Responsibilities,
) -> Result<MixtureModel, MixtureError> {
    m_step_warm(dataset, responsibilities, None)
}

/// [`m_step`] with each component's Sinkhorn solve seeded at the previous
/// model. Sinkhorn descends the weighted potential from any start, so even a
/// solve truncated at the iteration budget cannot decrease the expected
/// complete-data likelihood; this is what keeps EM monotone when a weighted
/// subproblem drifts toward the boundary.
pub fn m_step_warm(
    dataset: &ReducedDataset,
    responsibilities: &Responsibilities,
    warm: Option<&MixtureModel>,
) -> Result<MixtureModel, MixtureError> {
    let r = responsibilities
        .w
        .first()
        .map(Vec::len)
        .ok_or(MixtureError::NoComponents)?;
    let m = dataset.n_items();
    let n_obs = dataset.n_observations();

    let mut weights = vec![0.0; r];
    for (sel, w_row) in dataset.selections().iter().zip(&responsibilities.w) {
        for (l, w) in w_row.iter().enumerate() {
            weights[l] += sel.count * w;
        }
    }
    weights.iter_mut().for_each(|x| *x /= n_obs);

    let mut triplets = Vec::new();
    for (i, set) in dataset.unique_sets().iter().enumerate() {
        for &j in set {
            triplets.push((i, j, 1.0));
        }
    }
    let a = NonnegMatrix::from_triplets(dataset.n_sets(), m, &triplets)?;

    let mut components = Vec::with_capacity(r);
    let mut regularized_components = vec![false; r];
    for l in 0..r {
        let mut p_l = vec![0.0; dataset.n_sets()];
        let mut q_l = vec![0.0; m];
        for (sel, w_row) in dataset.selections().iter().zip(&responsibilities.w) {
            let mass = sel.count * w_row[l];
            p_l[sel.set] += mass;
            q_l[sel.item] += mass;
        }
        // A set group can starve when its posteriors underflow; keep the row
        // marginal representable without disturbing the solution mass.
        let sum_p: f64 = p_l.iter().sum();
        let floor = sum_p * 1e-300;
        p_l.iter_mut().for_each(|x| *x = x.max(floor));

        let starved = q_l.iter().any(|&x| x <= 0.0);
        let d0 = if starved {
            regularized_components[l] = true;
            let prob = BalancingProblem::with_nonneg_cols(a.clone(), p_l, q_l)?;
            let cfg = SinkhornConfig::regularized(1.0 + 1e-3, m as f64 * 1e-3)
                .with_tol(1e-10)
                .with_max_iterations(100_000);
            let (state, report) = balancing::run(&prob, &cfg)?;
            if !report.converged() {
                return Err(MixtureError::NotConverged { component: l });
            }
            state.d0
        } else {
            let prob = BalancingProblem::new(a.clone(), p_l, q_l)?;
            let mut cfg = SinkhornConfig::plain().with_tol(1e-11).with_max_iterations(20_000);
            if let Some(model) = warm {
                cfg = cfg.with_initial_d0(model.components[l].clone());
            }
            // A truncated run is acceptable: from the warm start it still
            // improves the component's weighted objective.
            let (state, _) = balancing::run(&prob, &cfg)?;
            state.d0
        };
        components.push(simplex_normalize(d0));
    }

    Ok(MixtureModel {
        weights,
        components,
        regularized_components,
    })
}

/// Observed-data log-likelihood `Σ_g count_g · ln Σ_ℓ p_ℓ·s^ℓ_{j_g}/Σ_{k∈S_g} s^ℓ_k`.
pub fn observed_log_likelihood(dataset: &ReducedDataset, model: &MixtureModel) -> f64 {
    let r = model.r();
    let log_weights: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut ll = 0.0;
    for sel in dataset.selections() {
        let set = &dataset.unique_sets()[sel.set];
        let logs: Vec<f64> = (0..r)
            .map(|l| {
                let denom: f64 = set.iter().map(|&k| model.components[l][k]).sum();
                log_weights[l] + model.components[l][sel.item].ln() - denom.ln()
            })
            .collect();
        ll += sel.count * log_sum_exp(&logs);
    }
    ll
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub components: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Stop when the observed-data log-likelihood improves by less than this.
    pub tol: f64,
    /// Explicit starting model; otherwise components are drawn from a
    /// symmetric Dirichlet(1) with uniform weights.
    pub init: Option<MixtureModel>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 1,
            seed: 0,
            max_rounds: 200,
            tol: 1e-9,
            init: None,
        }
    }
}

fn dirichlet_ones(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    // Normalized Exp(1) draws.
    simplex_normalize((0..m).map(|_| -rng.random_range(1e-12..1.0f64).ln()).collect())
}

/// Alternates E and M steps until the observed-data log-likelihood improves
/// by less than `tol` or the round budget runs out; returns the model and the
/// per-round log-likelihood trace.
pub fn run_em(
    dataset: &ReducedDataset,
    config: &EmConfig,
) -> Result<(MixtureModel, Vec<f64>), MixtureError> {
    let r = config.components;
    if r == 0 {
        return Err(MixtureError::NoComponents);
    }
    let m = dataset.n_items();
    let mut model = match &config.init {
        Some(init) => init.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            MixtureModel {
                weights: vec![1.0 / r as f64; r],
                components: (0..r).map(|_| dirichlet_ones(&mut rng, m)).collect(),
                regularized_components: vec![false; r],
            }
        }
    };

    let mut trace = vec![observed_log_likelihood(dataset, &model)];
    for _ in 0..config.max_rounds {
        let responsibilities = e_step(dataset, &model);
        model = m_step_warm(dataset, &responsibilities, Some(&model))?;
        let ll = observed_log_likelihood(dataset, &model);
        let improved = ll - trace.last().unwrap();
        trace.push(ll);
        if improved < config.tol {
            break;
        }
    }
    Ok((model, trace))
}
