//! Shared generators and independent oracles for the integration suites.
// Each integration test binary compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use balancekit::choice::{ChoiceObservation, ReducedDataset};
use balancekit::model::{BalancingProblem, NonnegMatrix};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random problem whose strong existence is guaranteed by construction: the
/// marginals are the row/column sums of a strictly positive matrix carried by
/// the same support pattern. Patterns are redrawn until connected.
pub fn random_feasible_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    density: f64,
) -> BalancingProblem {
    loop {
        let mut triplets = Vec::new();
        let mut witness = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() < density {
                    triplets.push((i, j, rng.random_range(0.05..2.0)));
                    witness.push((i, j, rng.random_range(0.05..2.0)));
                }
            }
        }
        let Ok(a) = NonnegMatrix::from_triplets(n, m, &triplets) else {
            continue;
        };
        if !balancekit::feasibility::check_uniqueness(&a) {
            continue;
        }
        let b = NonnegMatrix::from_triplets(n, m, &witness).unwrap();
        let p = b.row_sums();
        let q = b.col_sums();
        match BalancingProblem::new(a, p, q) {
            Ok(prob) => return prob,
            Err(_) => continue,
        }
    }
}

/// Strictly positive instance with uniform size bounds and generic marginals.
pub fn random_positive_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BalancingProblem {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0.05..2.0)).collect())
        .collect();
    let a = NonnegMatrix::from_dense(&rows).unwrap();
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let mut q: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x *= sp / sq);
    BalancingProblem::new(a, p, q).unwrap()
}

pub fn item_ids(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("{j:03}")).collect()
}

/// Random choice dataset over `m` items. Every item is guaranteed to appear;
/// winners are drawn uniformly from each set, so strong connectivity holds on
/// some draws and fails on others.
pub fn random_choice_observations(
    rng: &mut ChaCha8Rng,
    m: usize,
    n_obs: usize,
) -> Vec<ChoiceObservation> {
    random_choice_observations_with(rng, m, n_obs, true)
}

/// As [`random_choice_observations`]; `anchor` controls whether a full
/// choice set over all items is appended (which makes strong connectivity
/// very likely).
pub fn random_choice_observations_with(
    rng: &mut ChaCha8Rng,
    m: usize,
    n_obs: usize,
    anchor: bool,
) -> Vec<ChoiceObservation> {
    let ids = item_ids(m);
    let mut observations = Vec::with_capacity(n_obs + 1);
    for _ in 0..n_obs {
        let size = rng.random_range(2..=m);
        let mut set: Vec<usize> = (0..m).collect();
        set.shuffle(rng);
        set.truncate(size);
        let chosen = set[rng.random_range(0..size)];
        observations.push(ChoiceObservation {
            chosen: ids[chosen].clone(),
            choice_set: set.iter().map(|&j| ids[j].clone()).collect(),
        });
    }
    if anchor {
        observations.push(ChoiceObservation {
            chosen: ids[rng.random_range(0..m)].clone(),
            choice_set: ids.clone(),
        });
    }
    observations
}

/// Independent maximizer of the Luce log-likelihood: projected gradient
/// ascent on the log-scores with Barzilai-Borwein steps and a non-monotone
/// (Grippo-Lampariello-Lucidi) backtracking safeguard. Returns
/// simplex-normalized scores.
pub fn gradient_ascent_mle(reduced: &ReducedDataset, grad_tol: f64) -> Vec<f64> {
    let m = reduced.n_items();
    let mut u = vec![0.0f64; m];

    // Objective and gradient in one pass; the gradient is projected onto the
    // subspace orthogonal to ones since the objective is shift-invariant.
    let eval = |u: &[f64]| -> (f64, Vec<f64>) {
        let mut ll = 0.0;
        let mut g = reduced.wins().to_vec();
        for (j, &w) in reduced.wins().iter().enumerate() {
            ll += w * u[j];
        }
        for (i, set) in reduced.unique_sets().iter().enumerate() {
            let r = reduced.multiplicities()[i];
            let max = set.iter().map(|&k| u[k]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &k in set {
                total += (u[k] - max).exp();
            }
            ll -= r * (max + total.ln());
            for &k in set {
                g[k] -= r * (u[k] - max).exp() / total;
            }
        }
        let mean: f64 = g.iter().sum::<f64>() / m as f64;
        g.iter_mut().for_each(|x| *x -= mean);
        (ll, g)
    };

    let (mut f, mut g) = eval(&u);
    let mut step = 1.0 / reduced.n_observations();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut recent = std::collections::VecDeque::from([f]);
    for iter in 0..100_000 {
        let g_inf = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if g_inf <= grad_tol {
            break;
        }
        // Alternate the two Barzilai-Borwein step sizes.
        if let Some((pu, pg)) = &prev {
            let mut ss = 0.0;
            let mut sy = 0.0;
            let mut yy = 0.0;
            for k in 0..m {
                let sk = u[k] - pu[k];
                let yk = g[k] - pg[k];
                ss += sk * sk;
                sy += sk * yk;
                yy += yk * yk;
            }
            // Ascent: the gradient change points against the step, so -sy > 0.
            let bb = if iter % 2 == 0 {
                if sy < 0.0 {
                    -ss / sy
                } else {
                    step
                }
            } else if yy > 0.0 {
                -sy / yy
            } else {
                step
            };
            step = bb.clamp(1e-14, 1e8);
        }
        let g_norm2: f64 = g.iter().map(|x| x * x).sum();
        let f_ref = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::min);
        let mut t = step;
        let mut accepted = false;
        for _ in 0..80 {
            let candidate: Vec<f64> = u.iter().zip(&g).map(|(x, gx)| x + t * gx).collect();
            let (fc, gc) = eval(&candidate);
            if fc >= f_ref + 1e-4 * t * g_norm2 {
                prev = Some((std::mem::take(&mut u), std::mem::take(&mut g)));
                u = candidate;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.25;
        }
        if !accepted {
            break;
        }
        recent.push_back(f);
        if recent.len() > 10 {
            recent.pop_front();
        }
    }
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = u.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|x| x / sum).collect()
}
