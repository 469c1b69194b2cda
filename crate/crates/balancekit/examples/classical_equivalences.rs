//! The classical estimation updates are one full Sinkhorn step in disguise:
//! the Zermelo/Ford/Dykstra pairwise update, the Hunter MM update for
//! Plackett–Luce rankings, and the ChoiceRank update on transition graphs
//! all coincide elementwise with the scaling iteration on their mapped
//! datasets.
//!
//! ```text
//! cargo run --example classical_equivalences
//! ```

use balancekit::choice::{
    choicerank_update, decompose_ranking, mm_update, network_to_dataset, pairwise_update, reduce,
    scaling_iteration, ChoiceObservation, TransitionCounts,
};

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Pairwise: 3 comparisons of (0,1), 2 of (1,2), 2 of (0,2).
    let observations = vec![
        ChoiceObservation::new("0", vec!["0", "1"]),
        ChoiceObservation::new("0", vec!["0", "1"]),
        ChoiceObservation::new("1", vec!["0", "1"]),
        ChoiceObservation::new("1", vec!["1", "2"]),
        ChoiceObservation::new("2", vec!["1", "2"]),
        ChoiceObservation::new("0", vec!["0", "2"]),
        ChoiceObservation::new("2", vec!["0", "2"]),
    ];
    let reduced = reduce(&observations)?;
    let comparisons = vec![
        vec![0.0, 3.0, 2.0],
        vec![3.0, 0.0, 2.0],
        vec![2.0, 2.0, 0.0],
    ];
    let wins = vec![3.0, 2.0, 2.0];
    let s = vec![0.5, 0.3, 0.2];
    let zermelo = pairwise_update(&comparisons, &wins, &s);
    let sinkhorn = scaling_iteration(&reduced, &s)?;
    println!("pairwise update:   {zermelo:.6?}");
    println!("sinkhorn step:     {sinkhorn:.6?}");
    println!("max relative gap:  {:.2e}\n", max_gap(&zermelo, &sinkhorn));

    // Rankings: Hunter's MM denominator sums tail-score inverses.
    let rankings: Vec<Vec<usize>> = vec![vec![0, 1, 2, 3], vec![2, 0, 3], vec![3, 1]];
    let mut ranked_observations = Vec::new();
    for ranking in &rankings {
        let ids: Vec<String> = ranking.iter().map(|j| format!("{j:02}")).collect();
        ranked_observations.extend(decompose_ranking(&ids)?);
    }
    let reduced = reduce(&ranked_observations)?;
    let s = vec![0.4, 0.3, 0.2, 0.1];
    let mm = mm_update(&rankings, &s)?;
    let sinkhorn = scaling_iteration(&reduced, &s)?;
    println!("MM update:         {mm:.6?}");
    println!("sinkhorn step:     {sinkhorn:.6?}");
    println!("max relative gap:  {:.2e}\n", max_gap(&mm, &sinkhorn));

    // Network transitions: choice sets are out-neighborhoods.
    let graph = TransitionCounts {
        n_nodes: 4,
        edges: vec![
            (0, 1, 3.0),
            (0, 2, 1.0),
            (1, 2, 2.0),
            (1, 3, 1.0),
            (2, 3, 2.0),
            (2, 0, 1.0),
            (3, 0, 2.0),
            (3, 1, 1.0),
        ],
    };
    let mapped = network_to_dataset(&graph)?;
    let s = vec![0.3, 0.3, 0.2, 0.2];
    let choicerank = choicerank_update(&graph, &s)?;
    let sinkhorn = scaling_iteration(&mapped, &s)?;
    println!("choicerank update: {choicerank:.6?}");
    println!("sinkhorn step:     {sinkhorn:.6?}");
    println!("max relative gap:  {:.2e}", max_gap(&choicerank, &sinkhorn));
    Ok(())
}
