//! A reduced run of the complexity-constant study: median ξ(A, p, q) on
//! sparse random instances as the dimension grows, with a log-log slope fit.
//! The full configuration (n up to 300, 100 seeds, both distributions) runs
//! through `balancekit bench` or the acceptance suite.
//!
//! ```text
//! cargo run --release --example complexity_study
//! ```

use balancekit::bench::{run_bench, BenchSpec, EntryDistribution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = BenchSpec {
        sizes: vec![50, 100, 150, 200],
        distributions: vec![EntryDistribution::FoldedGaussian],
        seeds: 30,
        ..BenchSpec::default()
    };
    let report = run_bench(&spec)?;
    println!("distribution      n    m    median xi      discarded");
    for cell in &report.cells {
        println!(
            "{:<15} {:>4} {:>4}    {:>10.3e}    {}",
            cell.distribution.label(),
            cell.n,
            cell.m,
            cell.median_xi,
            cell.discarded
        );
    }
    for fit in &report.slopes {
        println!(
            "log-log slope of median xi vs n ({}): {:.2}",
            fit.distribution.label(),
            fit.log_log_slope
        );
    }
    println!("(discarded draws are re-drawn and counted)");
    Ok(())
}
