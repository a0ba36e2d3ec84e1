//! Train a sparse proxy collision checker on a random scene.
//!
//! Samples a 2-DOF environment, labels uniform configurations with the
//! exact oracle, trains the kernel perceptron, fits the interpolation
//! scorer on the surviving supports, and reports sparsity and accuracy.
//!
//! ```text
//! cargo run --release --example train_proxy
//! ```

use proxcol::harness::grid_accuracy;
use proxcol::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let seed = 7u64;
    let robot = default_robot(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = gen_env(&robot, 5, &mut rng)?;
    println!("scene: {} obstacles, seed {seed}", ws.obstacles.len());

    let n = training_samples(robot.dof);
    let report = train_model(&ws, n, TargetMode::Labels, seed)?;
    let model = &report.model;
    println!(
        "trained on {n} samples in {:.2}s: {} supports ({:.1}% of the data), separated: {}",
        report.train_time_s,
        model.num_supports(),
        100.0 * report.support_fraction,
        model.separated,
    );

    // Sign agreement with the oracle over a dense joint-space grid.
    let acc = grid_accuracy(model, &ws, 100)?;
    println!("sign agreement on a 100 x 100 grid: {:.1}%", 100.0 * acc);

    // Scores are smooth surrogates: positive predicts collision.
    let oracle = Oracle::new(&ws);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    println!("spot checks (score vs truth):");
    for _ in 0..5 {
        let x = proxcol::harness::uniform_config(&ws.robot, &mut rng);
        let psi = model.score(&x)?[0];
        let truth = oracle.check(&x)?[0];
        println!(
            "  config [{:+.2}, {:+.2}]  score {psi:+.3}  oracle {}",
            x[0],
            x[1],
            if truth == 1 { "collision" } else { "free" }
        );
    }

    // Models round-trip through JSON for reuse by the optimizer and CLI.
    let path = std::env::temp_dir().join("train_proxy_model.json");
    model.save(&path)?;
    let back = SupportModel::load(&path)?;
    println!("saved and reloaded {} ({} supports)", path.display(), back.num_supports());
    Ok(())
}
