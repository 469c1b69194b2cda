//! The linear-versus-sublinear dichotomy on the classic 2x2 instance
//! A = [[3, 1], [0, 2]] with marginals p = q = (3, 3): a balanced matrix
//! exists in the limit, but no finite scaling pair reaches it, so Sinkhorn
//! slows down to Θ(1/t). Shifting row mass to p = (3.5, 2.5) restores strong
//! existence and geometric convergence.
//!
//! ```text
//! cargo run --release --example limit_scaling_slowdown
//! ```

use balancekit::feasibility::feasibility_verdict;
use balancekit::model::{BalancingProblem, NonnegMatrix};
use balancekit::{run, SinkhornConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = NonnegMatrix::from_dense(&[vec![3.0, 1.0], vec![0.0, 2.0]])?;

    let degenerate = BalancingProblem::new(a.clone(), vec![3.0, 3.0], vec![3.0, 3.0])?;
    let verdict = feasibility_verdict(&degenerate);
    println!(
        "p = (3, 3):   weak existence {}, strong existence {}, regime {:?}",
        verdict.weak_existence, verdict.strong_existence, verdict.regime
    );
    if let Some(w) = &verdict.witness {
        println!(
            "  witness: rows {:?} vs cols {:?}, forced-zero entry {:?}",
            w.rows, w.cols, w.forced_zero_edge
        );
    }

    let config = SinkhornConfig::plain()
        .with_scalings()
        .with_tol(1e-300)
        .with_max_iterations(100_000);
    let (_, report) = run(&degenerate, &config)?;
    println!("  termination: {:?} after {} iterations", report.termination, report.iterations);
    println!("  the fading entry decays like 1/t (t·Â₁₂ plateaus):");
    for &t in &[100usize, 1_000, 10_000, 100_000] {
        let rec = &report.history.as_deref().unwrap()[t];
        let entry = rec.d1.as_ref().unwrap()[0] * a.entry(0, 1) * rec.d0.as_ref().unwrap()[1];
        println!("    t = {t:>6}:  Â₁₂ = {entry:.3e}   t·Â₁₂ = {:.4}", t as f64 * entry);
    }

    let restored = BalancingProblem::new(a, vec![3.5, 2.5], vec![3.0, 3.0])?;
    let verdict = feasibility_verdict(&restored);
    println!(
        "p = (3.5, 2.5): strong existence {}, regime {:?}",
        verdict.strong_existence, verdict.regime
    );
    let (_, report) = run(&restored, &SinkhornConfig::plain().with_tol(1e-12))?;
    println!(
        "  termination: {:?} after {} iterations (geometric regime)",
        report.termination, report.iterations
    );
    Ok(())
}
