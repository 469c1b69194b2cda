//! When some item never wins, the MLE sits on the simplex boundary and the
//! plain pipeline refuses. Two remedies keep every score interior: a
//! Gamma(α, β) prior (regularized Sinkhorn) and data augmentation with a
//! lightly-weighted full choice set.
//!
//! ```text
//! cargo run --example regularization
//! ```

use balancekit::choice::{
    augment_data, estimate_mle, estimate_regularized, reduce, ChoiceObservation, EstimateConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // "anchovy" appears in three sets and never wins.
    let observations = vec![
        ChoiceObservation::new("margherita", vec!["margherita", "anchovy"]),
        ChoiceObservation::new("margherita", vec!["margherita", "funghi"]),
        ChoiceObservation::new("funghi", vec!["margherita", "funghi"]),
        ChoiceObservation::new("funghi", vec!["funghi", "anchovy"]),
        ChoiceObservation::new("margherita", vec!["margherita", "funghi", "anchovy"]),
    ];
    let reduced = reduce(&observations)?;

    match estimate_mle(&reduced, &EstimateConfig::default()) {
        Err(e) => println!("plain MLE: {e}"),
        Ok(_) => unreachable!("dataset violates strong connectivity"),
    }

    let m = reduced.n_items() as f64;
    let map = estimate_regularized(&reduced, 2.0, m, &EstimateConfig::default())?;
    println!("\nGamma(2, m) posterior mode (regularized Sinkhorn):");
    for (item, score) in map.item_ids.iter().zip(&map.scores) {
        println!("  {item:<12} {score:.4}");
    }
    println!("  converged: {} in {} iterations", map.converged, map.iterations);

    let augmented = augment_data(&reduced, 1.0)?;
    let mle = estimate_mle(&augmented, &EstimateConfig::default())?;
    println!("\nMLE after augmenting with one full set (eps = 1):");
    for (item, score) in mle.item_ids.iter().zip(&mle.scores) {
        println!("  {item:<12} {score:.4}");
    }
    Ok(())
}
