//! Fit a two-component mixture of Luce models with EM. The M-step solves one
//! responsibility-weighted matrix balancing problem per component.
//!
//! ```text
//! cargo run --release --example mixture_em
//! ```

use balancekit::choice::{reduce, ChoiceObservation};
use balancekit::mixture::{run_em, EmConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let items: Vec<String> = (0..5).map(|j| format!("item{j}")).collect();
    // Two well-separated taste profiles with equal prevalence.
    let truth = [
        vec![0.55, 0.28, 0.09, 0.04, 0.04],
        vec![0.04, 0.04, 0.09, 0.28, 0.55],
    ];

    let mut observations = Vec::new();
    for _ in 0..4000 {
        let s = &truth[usize::from(rng.random_bool(0.5))];
        let size = if rng.random_bool(0.4) { 5 } else { rng.random_range(2..5) };
        let mut set: Vec<usize> = (0..5).collect();
        set.shuffle(&mut rng);
        set.truncate(size);
        let total: f64 = set.iter().map(|&k| s[k]).sum();
        let mut pick = rng.random_range(0.0..total);
        let mut chosen = set[0];
        for &k in &set {
            if pick <= s[k] {
                chosen = k;
                break;
            }
            pick -= s[k];
        }
        observations.push(ChoiceObservation {
            chosen: items[chosen].clone(),
            choice_set: set.iter().map(|&k| items[k].clone()).collect(),
        });
    }
    let dataset = reduce(&observations)?;

    let config = EmConfig {
        components: 2,
        seed: 3,
        max_rounds: 200,
        tol: 1e-10,
        init: None,
    };
    let (model, trace) = run_em(&dataset, &config)?;
    println!(
        "EM finished after {} rounds; log-likelihood {:.2} -> {:.2}",
        trace.len() - 1,
        trace.first().unwrap(),
        trace.last().unwrap()
    );
    println!("weights: {:?}", model.weights);
    for (l, component) in model.components.iter().enumerate() {
        let formatted: Vec<String> = component.iter().map(|x| format!("{x:.3}")).collect();
        println!("component {l}: [{}]", formatted.join(", "));
    }
    println!("truth 0:     {:?}", truth[0]);
    println!("truth 1:     {:?}", truth[1]);
    Ok(())
}
