//! Solve a small matrix balancing problem and inspect the solution.
//!
//! ```text
//! cargo run --example balance_basics
//! ```

use balancekit::model::{marginals, scaled_matrix, BalancingProblem, NonnegMatrix};
use balancekit::{run, SinkhornConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 3x4 nonnegative matrix with a few structural zeros.
    let a = NonnegMatrix::from_dense(&[
        vec![0.3, 1.2, 0.0, 0.7],
        vec![1.1, 0.0, 0.4, 0.2],
        vec![0.0, 0.5, 2.0, 1.0],
    ])?;
    let p = vec![1.0, 2.0, 1.5];
    let q = vec![1.2, 1.1, 1.4, 0.8];
    let prob = BalancingProblem::new(a, p, q)?;

    let config = SinkhornConfig::plain().with_tol(1e-10).with_history();
    let (state, report) = run(&prob, &config)?;
    println!(
        "terminated: {:?} after {} iterations (l1 row err {:.2e}, col err {:.2e})",
        report.termination, report.iterations, report.final_l1_row_err, report.final_l1_col_err
    );

    let snap = marginals(&prob, &state)?;
    println!("row sums:    {:?}", snap.row_sums);
    println!("target p:    {:?}", prob.p());
    println!("col sums:    {:?}", snap.col_sums);
    println!("target q:    {:?}", prob.q());

    let ahat = scaled_matrix(&prob, &state)?;
    println!("scaled matrix (same zero pattern as A):");
    for i in 0..ahat.n_rows() {
        let row: Vec<String> = (0..ahat.n_cols())
            .map(|j| format!("{:.4}", ahat.entry(i, j)))
            .collect();
        println!("  [{}]", row.join(", "));
    }

    // The potential decreases monotonically along the iteration.
    let history = report.history.as_deref().unwrap();
    println!(
        "potential: g_0 = {:.6} -> g_final = {:.6}",
        history[0].g,
        history.last().unwrap().g
    );
    Ok(())
}
