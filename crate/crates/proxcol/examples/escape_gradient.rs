//! Gradient-descent escape from predicted collision.
//!
//! Drops the arm into colliding configurations and walks down the proxy
//! score's analytic gradient until every biased score clears zero, then
//! verifies the endpoint against the exact oracle.
//!
//! ```text
//! cargo run --release --example escape_gradient
//! ```

use proxcol::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let seed = 11u64;
    let robot = default_robot(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = gen_env(&robot, 5, &mut rng)?;
    // Distance targets make the stop rule physical: descent runs until the
    // predicted clearance reaches the bias. The fit compresses distances
    // near the boundary, so ask for a modest margin rather than the
    // optimizer's default.
    let mut model = train_model(&ws, training_samples(2), TargetMode::Distances, seed)?.model;
    model.bias = nalgebra::DVector::from_element(ws.num_categories, 0.05);
    println!("model: {} supports over {} obstacles", model.num_supports(), ws.obstacles.len());

    let oracle = Oracle::new(&ws);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut attempts = 0usize;
    let mut escaped = 0usize;
    let mut verified = 0usize;
    let mut shown = false;
    while attempts < 50 {
        let x0 = proxcol::harness::uniform_config(&ws.robot, &mut rng);
        if oracle.check(&x0)?.iter().all(|&c| c == -1) {
            continue; // only start from real collisions
        }
        attempts += 1;
        let walk = escape(&x0, &model, 0.02, 500)?;
        let x1 = walk.path.last().unwrap();
        let truly_free = oracle.check(x1)?.iter().all(|&c| c == -1);
        escaped += usize::from(walk.converged);
        verified += usize::from(truly_free);
        if !shown && walk.converged {
            shown = true;
            let s0 = model.score(&x0)?.max();
            let s1 = model.score(x1)?.max();
            println!(
                "first escape: [{:+.2}, {:+.2}] -> [{:+.2}, {:+.2}] in {} steps, \
                 worst score {s0:+.3} -> {s1:+.3}, oracle says {}",
                x0[0],
                x0[1],
                x1[0],
                x1[1],
                walk.path.len() - 1,
                if truly_free { "free" } else { "still colliding" },
            );
        }
    }
    println!(
        "{attempts} colliding starts: {escaped} reached biased score <= 0, \
         {verified} verified free by the oracle"
    );
    Ok(())
}
