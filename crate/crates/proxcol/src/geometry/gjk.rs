//! 2D GJK distance and EPA penetration between a segment and a convex core.
//!
//! Everything here operates on the Minkowski difference `D = seg ⊖ core`:
//! the shapes overlap iff the origin lies in `D`, the separation distance is
//! the distance from the origin to `D`, and the penetration depth is the
//! distance from the origin to `D`'s boundary from the inside. `D` is a
//! convex polygon (segment and core are polytopes), so both iterations
//! terminate after finitely many support calls.

use nalgebra::Vector2;

type V2 = Vector2<f64>;

const MAX_ITERATIONS: usize = 100;
const EPS: f64 = 1e-12;

/// Convex "core" of an obstacle before Minkowski dilation by its radius:
/// a circle is a dilated point, a polygon is its own core.
#[derive(Debug, Clone, Copy)]
pub enum ConvexCore<'a> {
    Point(V2),
    Polygon(&'a [V2]),
}

fn support_segment(a: V2, b: V2, d: V2) -> V2 {
    if a.dot(&d) >= b.dot(&d) {
        a
    } else {
        b
    }
}

fn support_core(core: &ConvexCore, d: V2) -> V2 {
    match core {
        ConvexCore::Point(p) => *p,
        ConvexCore::Polygon(vs) => {
            let mut best = vs[0];
            let mut best_dot = best.dot(&d);
            for &v in &vs[1..] {
                let dot = v.dot(&d);
                if dot > best_dot {
                    best_dot = dot;
                    best = v;
                }
            }
            best
        }
    }
}

/// Support point of the Minkowski difference `seg ⊖ core` in direction `d`.
fn support_diff(seg: (V2, V2), core: &ConvexCore, d: V2) -> V2 {
    support_segment(seg.0, seg.1, d) - support_core(core, -d)
}

fn cross(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `(a × b) × c` expanded in 2D: a direction perpendicular to `c`... here
/// used in the classic form `triple(ab, ao, ab)` = perpendicular of `ab`
/// pointing toward the origin.
fn perp_towards(ab: V2, ao: V2) -> V2 {
    ao * ab.dot(&ab) - ab * ab.dot(&ao)
}

/// Boolean GJK: `Some(triangle)` enclosing the origin when the shapes
/// intersect, `None` when they are disjoint.
fn gjk_intersect(seg: (V2, V2), core: &ConvexCore) -> Option<[V2; 3]> {
    let mut d = {
        let seg_mid = (seg.0 + seg.1) / 2.0;
        let core_ref = match core {
            ConvexCore::Point(p) => *p,
            ConvexCore::Polygon(vs) => vs.iter().sum::<V2>() / vs.len() as f64,
        };
        let d0 = seg_mid - core_ref;
        if d0.norm() < EPS {
            Vector2::new(1.0, 0.0)
        } else {
            d0
        }
    };
    let mut simplex: Vec<V2> = vec![support_diff(seg, core, d)];
    d = -simplex[0];
    if d.norm() < EPS {
        // first support point is the origin: exact touch
        d = Vector2::new(0.0, 1.0);
    }
    for _ in 0..MAX_ITERATIONS {
        let p = support_diff(seg, core, d);
        if p.dot(&d) < 0.0 {
            return None; // a separating hyperplane exists
        }
        simplex.push(p);
        match simplex.len() {
            2 => {
                let a = simplex[1]; // newest
                let b = simplex[0];
                let ab = b - a;
                let ao = -a;
                let mut perp = perp_towards(ab, ao);
                if perp.norm() < EPS * ab.norm_squared().max(1.0) {
                    // origin lies on the line through a, b; pick either side
                    perp = Vector2::new(-ab.y, ab.x);
                }
                d = perp;
            }
            _ => {
                let a = simplex[2]; // newest
                let b = simplex[1];
                let c = simplex[0];
                let ab = b - a;
                let ac = c - a;
                let ao = -a;
                let ab_perp = perp_towards(ab, -ac); // away from c
                let ac_perp = perp_towards(ac, -ab); // away from b
                if ab_perp.dot(&ao) > 0.0 {
                    simplex.remove(0); // drop c
                    d = ab_perp;
                } else if ac_perp.dot(&ao) > 0.0 {
                    simplex.remove(1); // drop b
                    d = ac_perp;
                } else {
                    return Some([c, b, a]);
                }
            }
        }
        if d.norm() < EPS {
            // origin sits on the current face: treat as (touching) hit
            while simplex.len() < 3 {
                let extra = support_diff(seg, core, Vector2::new(0.0, 1.0));
                simplex.push(extra);
            }
            return Some([simplex[0], simplex[1], simplex[2]]);
        }
    }
    None
}

/// Closest point to the origin on the convex hull of up to three points,
/// and the minimal sub-simplex realizing it.
fn closest_on_simplex(simplex: &[V2]) -> (V2, Vec<V2>) {
    match simplex.len() {
        1 => (simplex[0], vec![simplex[0]]),
        2 => closest_on_segment(simplex[0], simplex[1]),
        _ => {
            let (a, b, c) = (simplex[0], simplex[1], simplex[2]);
            // inside test via signs relative to each edge
            let d1 = cross(b - a, -a);
            let d2 = cross(c - b, -b);
            let d3 = cross(a - c, -c);
            let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
            let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
            if !(has_pos && has_neg) {
                return (Vector2::zeros(), simplex.to_vec()); // origin inside or on edge
            }
            let mut best = closest_on_segment(a, b);
            for (p, q) in [(b, c), (c, a)] {
                let cand = closest_on_segment(p, q);
                if cand.0.norm_squared() < best.0.norm_squared() {
                    best = cand;
                }
            }
            best
        }
    }
}

fn closest_on_segment(a: V2, b: V2) -> (V2, Vec<V2>) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < EPS * EPS {
        return (a, vec![a]);
    }
    let t = (-a).dot(&ab) / len2;
    if t <= 0.0 {
        (a, vec![a])
    } else if t >= 1.0 {
        (b, vec![b])
    } else {
        (a + t * ab, vec![a, b])
    }
}

/// GJK distance iteration for a disjoint pair. Returns 0 when the pair
/// turns out to touch.
fn gjk_distance(seg: (V2, V2), core: &ConvexCore) -> f64 {
    let mut simplex = vec![support_diff(seg, core, Vector2::new(1.0, 0.0))];
    for _ in 0..MAX_ITERATIONS {
        let (v, kept) = closest_on_simplex(&simplex);
        let dist = v.norm();
        if dist < EPS {
            return 0.0;
        }
        let d = -v / dist;
        let w = support_diff(seg, core, d);
        // every point of D satisfies ⟨x, v̂⟩ ≥ ⟨w, v̂⟩, so ⟨w, v̂⟩ is a lower
        // bound on the distance; stop when it meets the upper bound |v|.
        let lower = w.dot(&(v / dist));
        if dist - lower <= 1e-12 * dist.max(1.0) {
            return dist;
        }
        if kept.iter().any(|k| (k - w).norm() < EPS) {
            return dist; // no new support available: polytope exhausted
        }
        simplex = kept;
        simplex.push(w);
    }
    closest_on_simplex(&simplex).0.norm()
}

/// EPA: penetration depth for an intersecting pair, expanding a polytope
/// inside the Minkowski difference until the nearest boundary edge is found.
fn epa_penetration(seg: (V2, V2), core: &ConvexCore, triangle: [V2; 3]) -> f64 {
    let mut poly: Vec<V2> = triangle.to_vec();
    // drop duplicate vertices from the seed
    poly.dedup_by(|a, b| (*a - *b).norm() < EPS);
    if poly.len() >= 2 && (poly[0] - *poly.last().unwrap()).norm() < EPS {
        poly.pop();
    }
    // ensure CCW orientation
    let area2 = |p: &[V2]| -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += cross(p[i], p[(i + 1) % p.len()]);
        }
        s
    };
    if poly.len() >= 3 && area2(&poly) < 0.0 {
        poly.reverse();
    }
    // a flat seed (origin on a chord) is inflated by supports in both normals
    if poly.len() < 3 || area2(&poly).abs() < EPS {
        let dir = if poly.len() >= 2 && (poly[1] - poly[0]).norm() > EPS {
            (poly[1] - poly[0]).normalize()
        } else {
            Vector2::new(1.0, 0.0)
        };
        let n = Vector2::new(-dir.y, dir.x);
        let hi = support_diff(seg, core, n);
        let lo = support_diff(seg, core, -n);
        let a = support_diff(seg, core, dir);
        let b = support_diff(seg, core, -dir);
        poly = vec![a, hi, b, lo];
        poly.dedup_by(|x, y| (*x - *y).norm() < EPS);
        if poly.len() >= 2 && (poly[0] - *poly.last().unwrap()).norm() < EPS {
            poly.pop();
        }
        if poly.len() < 3 {
            return 0.0; // difference is degenerate: touching contact
        }
        if area2(&poly) < 0.0 {
            poly.reverse();
        }
    }

    for _ in 0..MAX_ITERATIONS {
        // closest edge by support-plane distance
        let mut best = (f64::INFINITY, 0, Vector2::zeros());
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let e = q - p;
            let len = e.norm();
            if len < EPS {
                continue;
            }
            let n = Vector2::new(e.y, -e.x) / len; // outward for CCW
            let dist = n.dot(&p);
            if dist < best.0 {
                best = (dist, i, n);
            }
        }
        let (dist, idx, n) = best;
        let w = support_diff(seg, core, n);
        let growth = n.dot(&w) - dist;
        if growth < 1e-10 {
            return dist.max(0.0);
        }
        // skip degenerate insertions (w coincides with an edge endpoint)
        if (w - poly[idx]).norm() < EPS || (w - poly[(idx + 1) % poly.len()]).norm() < EPS {
            return dist.max(0.0);
        }
        poly.insert(idx + 1, w);
    }
    // fallback: report the best estimate found
    let mut min_dist = f64::INFINITY;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let e = q - p;
        let len = e.norm();
        if len < EPS {
            continue;
        }
        let n = Vector2::new(e.y, -e.x) / len;
        min_dist = min_dist.min(n.dot(&p));
    }
    min_dist.max(0.0)
}

/// Distance from a point to a segment.
pub fn point_segment_distance(p: V2, a: V2, b: V2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < EPS * EPS {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Signed distance between a segment and a convex core: positive separation,
/// negative penetration, zero at touch. Point cores are handled analytically;
/// polygon cores go through GJK (separation) or EPA (penetration).
pub fn core_distance(seg: (V2, V2), core: &ConvexCore) -> f64 {
    match core {
        ConvexCore::Point(p) => point_segment_distance(*p, seg.0, seg.1),
        ConvexCore::Polygon(_) => match gjk_intersect(seg, core) {
            Some(tri) => -epa_penetration(seg, core, tri),
            None => gjk_distance(seg, core),
        },
    }
}
