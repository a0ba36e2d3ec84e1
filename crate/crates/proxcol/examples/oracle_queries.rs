//! Ground-truth collision oracle on a hand-built scene.
//!
//! Builds a 2-link arm with a circle and a tilted rectangle in separate
//! obstacle categories, then queries boolean labels and signed distances
//! for a few configurations and sweeps one joint across the boundary.
//!
//! ```text
//! cargo run --example oracle_queries
//! ```

use nalgebra::DVector;
use proxcol::prelude::*;
use std::f64::consts::PI;

fn main() -> Result<()> {
    let robot = RobotGeometry::new(vec![1.0, 1.0], 0.08, [0.0, 0.0], vec![None, None])?;
    let ws = Workspace::new(
        robot,
        vec![
            Obstacle::circle("ball", [1.3, 0.9], 0.35, 0),
            Obstacle::new(
                "plank",
                Shape::rect([0.0, 0.0], 0.9, 0.3).at_pose([-0.9, -1.1], 0.4),
                1,
            ),
        ],
        2,
    )?;
    println!(
        "scene: {} obstacles, {} categories, arm length {:.1}",
        ws.obstacles.len(),
        ws.num_categories,
        ws.robot.arm_length()
    );

    // Labels are +1 (collision) / -1 (free) per category; signed distances
    // are positive inside an obstacle and negative with clearance.
    let probes = [
        ("stretched right", DVector::from_column_slice(&[0.0, 0.0])),
        ("bent toward ball", DVector::from_column_slice(&[PI / 5.0, 0.3])),
        ("reaching plank", DVector::from_column_slice(&[-2.2, -0.3])),
    ];
    for (what, x) in &probes {
        let labels = check_collision(x, &ws)?;
        let dist = signed_distance(x, &ws)?;
        println!(
            "{what:>18}: labels {labels:?}  signed distances [{:+.3}, {:+.3}]",
            dist[0], dist[1]
        );
    }

    // Sweep the shoulder and report where the arm crosses into the ball.
    let mut last = -1i8;
    for k in 0..=100 {
        let q0 = -PI + 2.0 * PI * k as f64 / 100.0;
        let x = DVector::from_column_slice(&[q0, 0.3]);
        let now = check_collision(&x, &ws)?[0];
        if now != last && k > 0 {
            let side = if now == 1 { "enters" } else { "leaves" };
            println!("shoulder sweep {side} the ball near q0 = {q0:+.2}");
        }
        last = now;
    }

    // The counting wrapper tracks how many ground-truth checks a consumer
    // made; downstream stages use it to report oracle economics.
    let oracle = Oracle::new(&ws);
    for (_, x) in &probes {
        oracle.check(x)?;
        oracle.signed(x)?;
    }
    println!("oracle counter after {} probes x 2 calls: {}", probes.len(), oracle.calls());
    Ok(())
}
