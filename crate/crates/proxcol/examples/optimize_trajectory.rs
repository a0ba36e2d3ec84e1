//! Proxy-guided trajectory optimization between two free configurations.
//!
//! Trains a proxy on a random scene, then solves the same start/goal query
//! with analytic score gradients and with finite differences through the
//! exact oracle, comparing cost, feasibility, and how many ground-truth
//! checks each mode spent.
//!
//! ```text
//! cargo run --release --example optimize_trajectory
//! ```

use proxcol::harness::path_clearance;
use proxcol::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let seed = 20u64;
    let robot = default_robot(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = gen_env(&robot, 5, &mut rng)?;
    let query = gen_queries(&ws, 1, &mut rng)?.remove(0);
    let model = train_model(&ws, training_samples(2), TargetMode::Labels, seed)?.model;
    println!(
        "query [{:+.2}, {:+.2}] -> [{:+.2}, {:+.2}] through {} obstacles",
        query.start[0],
        query.start[1],
        query.goal[0],
        query.goal[1],
        ws.obstacles.len()
    );

    for mode in [GradientMode::Analytic, GradientMode::NumericOracle] {
        let report = solve_query(&model, &ws, &query, mode, seed)?;
        let clear = path_clearance(&report.trajectory, &ws, 0.02)?;
        println!(
            "{mode:>14}: feasible {} in {} iterations, objective {:.3}, \
             proxy checks {}, oracle checks {}, repair used {}, min clearance {:+.3}",
            report.feasible,
            report.iterations,
            report.objective,
            report.proxy_checks,
            report.oracle_checks,
            report.repair_used,
            clear.min(),
        );
        if mode == GradientMode::Analytic {
            let t = &report.trajectory;
            println!(
                "  {} waypoints; midpoint [{:+.2}, {:+.2}]",
                t.len(),
                t.waypoints[t.len() / 2][0],
                t.waypoints[t.len() / 2][1]
            );
            let path = std::env::temp_dir().join("optimize_trajectory_report.json");
            report.save(&path)?;
            println!("  report saved to {}", path.display());
        }
    }
    Ok(())
}
