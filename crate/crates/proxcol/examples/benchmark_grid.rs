//! A small reproducible benchmark grid over scenes, queries, and modes.
//!
//! Runs a trimmed grid (2-DOF, {1, 5} obstacles, 3 environments x 2
//! queries, analytic vs numeric-oracle gradients), prints the per-group
//! summary, and writes the raw per-query rows as CSV. Apart from the two
//! wall-time columns every field is byte-reproducible under the seed.
//! `BenchmarkSpec::desk` and `BenchmarkSpec::paper_scale` are the larger
//! stock grids behind the `benchmark` CLI subcommand.
//!
//! ```text
//! cargo run --release --example benchmark_grid
//! ```

use proxcol::harness::save_metrics_csv;
use proxcol::prelude::*;

fn main() -> Result<()> {
    let spec = BenchmarkSpec {
        dofs: vec![2],
        obstacle_counts: vec![1, 5],
        environments: 3,
        queries: 2,
        modes: vec![GradientMode::Analytic, GradientMode::NumericOracle],
        seed: 17,
    };
    let cells = spec.dofs.len() * spec.obstacle_counts.len();
    let runs = cells * spec.environments * spec.queries * spec.modes.len();
    println!("running {runs} solves over {cells} grid cells...");

    let rows = run_benchmark(&spec)?;
    for line in summarize(&rows) {
        println!("{line}");
    }

    // A headline comparison: total exact-oracle checks per mode.
    for mode in &spec.modes {
        let name = mode.to_string();
        let solved: Vec<_> =
            rows.iter().filter(|r| r.mode == name && r.success).collect();
        let checks: u64 = solved.iter().map(|r| r.oracle_checks).sum();
        println!(
            "{name:>14}: {}/{} solved, {:.0} oracle checks per solved query",
            solved.len(),
            rows.iter().filter(|r| r.mode == name).count(),
            checks as f64 / solved.len().max(1) as f64
        );
    }

    let path = std::env::temp_dir().join("benchmark_grid.csv");
    save_metrics_csv(&rows, &path)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}
