//! Temporary probe: attainable score margins across the corridor.

use nalgebra::DVector;
use proxcol::harness::gen_bias_scene;
use proxcol::prelude::*;

fn main() -> Result<()> {
    for seed in [0u64, 6, 15] {
        let (ws, query) = gen_bias_scene(seed)?;
        let model = train_model(&ws, training_samples(2), TargetMode::Labels, seed)?.model;
        println!("seed {seed}: start {:?} goal {:?}", query.start.as_slice(), query.goal.as_slice());
        // walk the straight init; at each waypoint report both scores
        let spec = ProblemSpec::new(&model, &ws, query.start.clone(), query.goal.clone())?;
        let init = spec.straight_init()?;
        let mut worst = [f64::NEG_INFINITY; 2];
        for w in &init.waypoints {
            let psi = model.score(w)?;
            worst[0] = worst[0].max(psi[0]);
            worst[1] = worst[1].max(psi[1]);
        }
        println!("  straight path worst scores: important {:+.3} ordinary {:+.3}", worst[0], worst[1]);
        // cross-section midway: sweep perpendicular-ish (shoulder) at the
        // midpoint elbow and print the two scores across the corridor
        let mid_q1 = 0.0;
        let mid_q0 = (query.start[0] + query.goal[0]) / 2.0;
        print!("  cross-section at elbow 0:");
        for k in -6..=6 {
            let q0 = mid_q0 + 0.1 * k as f64;
            let x = DVector::from_column_slice(&[q0, mid_q1]);
            let psi = model.score(&x)?;
            print!("  [{:+.2}: I{:+.2} o{:+.2}]", q0, psi[0], psi[1]);
        }
        println!();
    }
    Ok(())
}
