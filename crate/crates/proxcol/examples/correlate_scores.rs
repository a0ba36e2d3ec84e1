//! How well proxy scores track true signed distances.
//!
//! Trains two models on the same scene — one whose kernels compare
//! forward-kinematics control points, one working on raw joint angles —
//! then measures rank correlation between each model's score and the
//! oracle's signed distance on fresh uniform samples.
//!
//! ```text
//! cargo run --release --example correlate_scores
//! ```

use proxcol::harness::{
    raw_score_kernel, raw_train_kernel, save_correlation_csv, train_model_with,
};
use proxcol::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let seed = 13u64;
    let robot = default_robot(2)?;
    let dof = robot.dof;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = gen_env(&robot, 5, &mut rng)?;
    let n = training_samples(dof);

    let fk = train_model(&ws, n, TargetMode::Distances, seed)?.model;
    let raw = train_model_with(
        &ws,
        n,
        TargetMode::Distances,
        seed,
        raw_train_kernel(dof),
        raw_score_kernel(),
    )?
    .model;

    let fk_report = correlate(&fk, &ws, 1000, seed + 1)?;
    let raw_report = correlate(&raw, &ws, 1000, seed + 1)?;
    println!("{} score/distance pairs per model", fk_report.pairs.len());
    println!(
        "forward-kinematics kernels: spearman {:.3}, pearson {:.3}, r^2 {:.3}",
        fk_report.spearman, fk_report.pearson, fk_report.r_squared
    );
    println!(
        "   raw-configuration kernels: spearman {:.3}, pearson {:.3}, r^2 {:.3}",
        raw_report.spearman, raw_report.pearson, raw_report.r_squared
    );

    let path = std::env::temp_dir().join("correlate_scores.csv");
    save_correlation_csv(&fk_report, &path)?;
    println!("score,signed_distance pairs written to {}", path.display());
    Ok(())
}
