//! Estimate Luce scores from discrete choice observations and rankings.
//!
//! ```text
//! cargo run --example estimate_from_choices
//! ```

use balancekit::choice::{
    decompose_ranking, estimate_mle, reduce, ChoiceObservation, EstimateConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut observations = vec![
        ChoiceObservation::new("espresso", vec!["espresso", "filter"]),
        ChoiceObservation::new("espresso", vec!["espresso", "filter"]),
        ChoiceObservation::new("filter", vec!["espresso", "filter"]),
        ChoiceObservation::new("espresso", vec!["espresso", "cortado", "filter"]),
        ChoiceObservation::new("cortado", vec!["espresso", "cortado"]),
        ChoiceObservation::new("filter", vec!["cortado", "filter"]),
    ];
    // Rankings decompose into top-out choice observations.
    let ranking: Vec<String> = ["cortado", "espresso", "filter"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    observations.extend(decompose_ranking(&ranking)?);

    let reduced = reduce(&observations)?;
    println!(
        "{} observations over {} items reduce to {} unique choice sets",
        reduced.n_observations(),
        reduced.n_items(),
        reduced.n_sets()
    );
    println!("win counts: {:?} for {:?}", reduced.wins(), reduced.items());

    let estimate = estimate_mle(&reduced, &EstimateConfig::default())?;
    println!(
        "MLE after {} Sinkhorn iterations (optimality residual {:.1e}):",
        estimate.iterations, estimate.foc_residual
    );
    let mut ranked: Vec<(&String, f64)> = estimate
        .item_ids
        .iter()
        .zip(estimate.scores.iter().cloned())
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (item, score) in ranked {
        println!("  {item:<10} {score:.4}");
    }
    println!("log-likelihood: {:.4}", estimate.log_likelihood);
    Ok(())
}
