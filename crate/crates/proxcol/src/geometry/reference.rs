//! Slow, independent reference implementations used to cross-check the
//! GJK/EPA fast paths: separation by convex line search along the capsule
//! axis, penetration by an exhaustive direction sweep of the support
//! function. Orders of magnitude slower, but with no shared algorithmic
//! machinery beyond the support/point-distance primitives.

use nalgebra::Vector2;

use super::shapes::Shape;
use super::{Capsule, Obstacle};

type V2 = Vector2<f64>;

fn point_to_polygon(p: V2, verts: &[V2]) -> f64 {
    let n = verts.len();
    let inside = (0..n).all(|i| {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    });
    if inside {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        best = best.min(super::point_segment_distance(p, a, b));
    }
    best
}

/// Distance from the segment skeleton to the obstacle core (0 if they meet),
/// found by ternary search on the convex map `t ↦ dist(a + t·(b−a), core)`.
fn skeleton_separation(cap: &Capsule, ob: &Obstacle) -> f64 {
    let dist_at = |t: f64| -> f64 {
        let p = cap.a + t * (cap.b - cap.a);
        match &ob.shape {
            Shape::Circle { center, .. } => (p - Vector2::new(center[0], center[1])).norm(),
            Shape::Polygon { vertices } => {
                let verts: Vec<V2> =
                    vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect();
                point_to_polygon(p, &verts)
            }
        }
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dist_at(m1) <= dist_at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    dist_at((lo + hi) / 2.0)
}

fn support_segment(a: V2, b: V2, d: V2) -> f64 {
    a.dot(&d).max(b.dot(&d))
}

fn support_polygon(verts: &[V2], d: V2) -> f64 {
    verts.iter().map(|v| v.dot(&d)).fold(f64::NEG_INFINITY, f64::max)
}

/// Penetration depth of the segment skeleton into a polygon, by sweeping the
/// support function of the Minkowski difference over directions and refining
/// around the best with golden-section search. Valid only when they overlap.
fn skeleton_penetration(cap: &Capsule, verts: &[V2]) -> f64 {
    let h = |theta: f64| -> f64 {
        let d = Vector2::new(theta.cos(), theta.sin());
        support_segment(cap.a, cap.b, d) + support_polygon(verts, -d)
    };
    let sweep = 4096;
    let mut best_theta = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..sweep {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / sweep as f64;
        let v = h(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    let width = 2.0 * std::f64::consts::PI / sweep as f64;
    let (mut lo, mut hi) = (best_theta - width, best_theta + width);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if h(m1) <= h(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    h((lo + hi) / 2.0).min(best).max(0.0)
}

/// Reference signed distance for one capsule/obstacle pair, same convention
/// as [`super::pair_signed_distance`]: positive inside, negative clearance.
pub fn reference_pair_distance(cap: &Capsule, ob: &Obstacle) -> f64 {
    let sep = skeleton_separation(cap, ob);
    let extra = match &ob.shape {
        Shape::Circle { radius, .. } => *radius,
        Shape::Polygon { .. } => 0.0,
    };
    let skeleton = if sep > 1e-12 {
        sep
    } else {
        match &ob.shape {
            Shape::Circle { .. } => sep, // a point core cannot be penetrated
            Shape::Polygon { vertices } => {
                let verts: Vec<V2> =
                    vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect();
                -skeleton_penetration(cap, &verts)
            }
        }
    };
    (cap.radius + extra) - skeleton
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pair_signed_distance;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_agrees_on_handworked_cases() {
        let cap = Capsule { a: Vector2::new(0.0, 0.0), b: Vector2::new(2.0, 0.0), radius: 0.1 };
        // clearance to a circle above
        let far = Obstacle::circle("c", [1.0, 2.0], 0.5, 0);
        assert_abs_diff_eq!(reference_pair_distance(&cap, &far), 0.6 - 2.0, epsilon = 1e-9);
        // penetration into a square around the tip
        let hit = Obstacle::rect("r", [2.0, 0.0], 1.0, 1.0, 0);
        assert_abs_diff_eq!(reference_pair_distance(&cap, &hit), 0.6, epsilon = 1e-6);
    }

    #[test]
    fn reference_and_fast_path_agree_on_a_grid_of_poses() {
        let ob = Obstacle::polygon(
            "tri",
            vec![[0.0, 0.0], [1.2, 0.3], [0.4, 1.0]],
            0,
        );
        for i in 0..12 {
            for j in 0..12 {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
                let off = -1.5 + 3.0 * j as f64 / 11.0;
                let a = Vector2::new(off, -1.0 + 0.2 * i as f64);
                let b = a + Vector2::new(ang.cos(), ang.sin()) * 1.3;
                let cap = Capsule { a, b, radius: 0.15 };
                let fast = pair_signed_distance(&cap, &ob);
                let slow = reference_pair_distance(&cap, &ob);
                assert_abs_diff_eq!(fast, slow, epsilon = 1e-5);
            }
        }
    }
}
