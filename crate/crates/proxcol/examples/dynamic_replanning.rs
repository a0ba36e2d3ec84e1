//! Replanning around a moving obstacle with cheap model updates.
//!
//! A ball glides across the workspace over eight timesteps. Instead of
//! retraining from scratch each step, the active learner resamples around
//! the current support set, relabels against the moved scene, and retrains
//! warm; the same query is re-solved against each updated model.
//!
//! ```text
//! cargo run --release --example dynamic_replanning
//! ```

use proxcol::harness::Pose;
use proxcol::prelude::*;
use std::collections::BTreeMap;

fn main() -> Result<()> {
    let seed = 5u64;
    let robot = default_robot(2)?;
    let ws = Workspace::new(
        robot,
        vec![
            Obstacle::circle("ball", [1.1, 0.9], 0.25, 0),
            Obstacle::circle("post", [-0.9, -0.8], 0.2, 0),
        ],
        1,
    )?;

    // The ball drifts leftward through the arm's reach; the post stays put.
    let steps = 8;
    let script = MotionScript {
        steps: (0..steps)
            .map(|t| {
                let s = t as f64 / (steps - 1) as f64;
                let pose = Pose { position: [1.1 - 1.8 * s, 0.9 - 0.4 * s], rotation: 0.0 };
                BTreeMap::from([("ball".to_string(), pose)])
            })
            .collect(),
    };

    let query = Query {
        start: nalgebra::DVector::from_column_slice(&[-2.4, 0.6]),
        goal: nalgebra::DVector::from_column_slice(&[2.4, -0.6]),
    };
    let report = run_dynamic(
        &ws,
        &script,
        &query,
        GradientMode::Analytic,
        TargetMode::Distances,
        training_samples(2),
        seed,
    )?;

    println!("initial training: {:.2}s on {} samples", report.initial_train_s, report.n_train);
    println!("step  update_s  queries  accuracy  feasible");
    for (t, s) in report.steps.iter().enumerate() {
        println!(
            "{t:>4}  {:>8.3}  {:>7}  {:>8.3}  {}",
            s.update_s, s.oracle_queries_update, s.accuracy, s.report.feasible
        );
    }
    let mean_update =
        report.steps.iter().map(|s| s.update_s).sum::<f64>() / report.steps.len() as f64;
    println!(
        "mean update {:.3}s = {:.2}x the initial training time",
        mean_update,
        mean_update / report.initial_train_s
    );
    let path = std::env::temp_dir().join("dynamic_replanning_report.json");
    report.save(&path)?;
    println!("per-step reports saved to {}", path.display());
    Ok(())
}
