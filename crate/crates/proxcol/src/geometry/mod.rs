//! Ground-truth collision geometry: a capsule-link planar arm against
//! circle and convex-polygon obstacles, grouped into obstacle categories.
//!
//! The per-category signed distance follows the "positive means trouble"
//! convention: `d′ > 0` is the deepest penetration among colliding pairs,
//! `d′ < 0` is minus the closest clearance among all pairs, `d′ = 0` is
//! touching (counted as in collision). A category with no obstacles reports
//! `-∞`. Collision labels are `+1` iff `d′ ≥ 0`.

mod gjk;
pub mod reference;
mod shapes;

pub use gjk::{core_distance, point_segment_distance, ConvexCore};
pub use shapes::Shape;

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{control_points, RobotGeometry};

type V2 = Vector2<f64>;

/// A segment dilated by a radius; the collision volume of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: V2,
    pub b: V2,
    pub radius: f64,
}

/// A named obstacle assigned to a safety category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(flatten)]
    pub shape: Shape,
    pub category: usize,
    pub name: String,
}

impl Obstacle {
    pub fn new(name: impl Into<String>, shape: Shape, category: usize) -> Self {
        Self { shape, category, name: name.into() }
    }

    pub fn circle(name: impl Into<String>, center: [f64; 2], radius: f64, category: usize) -> Self {
        Self::new(name, Shape::circle(center, radius), category)
    }

    pub fn polygon(name: impl Into<String>, vertices: Vec<[f64; 2]>, category: usize) -> Self {
        Self::new(name, Shape::polygon(vertices), category)
    }

    pub fn rect(
        name: impl Into<String>,
        center: [f64; 2],
        width: f64,
        height: f64,
        category: usize,
    ) -> Self {
        Self::new(name, Shape::rect(center, width, height), category)
    }
}

/// Obstacle geometry reduced to a convex core plus a dilation radius, so
/// capsule-vs-obstacle distance becomes segment-vs-core distance minus the
/// summed radii.
#[derive(Debug, Clone)]
struct PreparedObstacle {
    point: Option<V2>,
    verts: Vec<V2>,
    extra_radius: f64,
    category: usize,
}

impl PreparedObstacle {
    fn of(ob: &Obstacle) -> Self {
        match &ob.shape {
            Shape::Circle { center, radius } => Self {
                point: Some(Vector2::new(center[0], center[1])),
                verts: Vec::new(),
                extra_radius: *radius,
                category: ob.category,
            },
            Shape::Polygon { vertices } => Self {
                point: None,
                verts: vertices.iter().map(|v| Vector2::new(v[0], v[1])).collect(),
                extra_radius: 0.0,
                category: ob.category,
            },
        }
    }

    fn core(&self) -> ConvexCore<'_> {
        match self.point {
            Some(p) => ConvexCore::Point(p),
            None => ConvexCore::Polygon(&self.verts),
        }
    }
}

/// A robot plus its obstacle scene. Construction (and deserialization)
/// validates shapes, category indices, and that no obstacle covers the
/// robot's base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawWorkspace")]
pub struct Workspace {
    pub robot: RobotGeometry,
    pub obstacles: Vec<Obstacle>,
    pub num_categories: usize,
    #[serde(skip)]
    prepared: Vec<PreparedObstacle>,
}

#[derive(Deserialize)]
struct RawWorkspace {
    robot: RobotGeometry,
    obstacles: Vec<Obstacle>,
    num_categories: usize,
}

impl TryFrom<RawWorkspace> for Workspace {
    type Error = Error;

    fn try_from(raw: RawWorkspace) -> Result<Self> {
        Workspace::new(raw.robot, raw.obstacles, raw.num_categories)
    }
}

impl Workspace {
    pub fn new(
        robot: RobotGeometry,
        obstacles: Vec<Obstacle>,
        num_categories: usize,
    ) -> Result<Self> {
        if num_categories == 0 {
            return Err(Error::InvalidGeometry("need at least one obstacle category".into()));
        }
        let base = robot.base_point();
        for ob in &obstacles {
            ob.shape.validate()?;
            if ob.category >= num_categories {
                return Err(Error::InvalidGeometry(format!(
                    "obstacle {:?} has category {} but only {} categories exist",
                    ob.name, ob.category, num_categories
                )));
            }
            if ob.shape.contains(base) {
                return Err(Error::InvalidGeometry(format!(
                    "obstacle {:?} covers the robot base point",
                    ob.name
                )));
            }
        }
        let prepared = obstacles.iter().map(PreparedObstacle::of).collect();
        Ok(Self { robot, obstacles, num_categories, prepared })
    }

    /// Same scene with one obstacle list swapped in (moving-obstacle steps).
    pub fn with_obstacles(&self, obstacles: Vec<Obstacle>) -> Result<Self> {
        Self::new(self.robot.clone(), obstacles, self.num_categories)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The arm's links as capsules at a given configuration.
pub fn link_capsules(robot: &RobotGeometry, config: &DVector<f64>) -> Result<Vec<Capsule>> {
    let pts = control_points(robot, config)?;
    let mut caps = Vec::with_capacity(pts.len());
    let mut prev = robot.base_point();
    for p in pts {
        caps.push(Capsule { a: prev, b: p, radius: robot.link_width });
        prev = p;
    }
    Ok(caps)
}

/// Signed distance between one capsule and one obstacle, positive inside.
pub fn pair_signed_distance(capsule: &Capsule, obstacle: &Obstacle) -> f64 {
    let prepared = PreparedObstacle::of(obstacle);
    pair_signed_distance_prepared(capsule, &prepared)
}

fn pair_signed_distance_prepared(capsule: &Capsule, ob: &PreparedObstacle) -> f64 {
    let s = core_distance((capsule.a, capsule.b), &ob.core());
    (capsule.radius + ob.extra_radius) - s
}

/// Per-category signed distance `d′` at a configuration. Entry `c` is the
/// worst (largest) pair value over all links and category-`c` obstacles;
/// categories with no obstacles report `-∞`.
pub fn signed_distance(config: &DVector<f64>, ws: &Workspace) -> Result<DVector<f64>> {
    let caps = link_capsules(&ws.robot, config)?;
    let mut d = DVector::from_element(ws.num_categories, f64::NEG_INFINITY);
    for ob in &ws.prepared {
        for cap in &caps {
            let v = pair_signed_distance_prepared(cap, ob);
            if v > d[ob.category] {
                d[ob.category] = v;
            }
        }
    }
    Ok(d)
}

/// Per-category collision labels: `+1` when any pair touches or overlaps
/// (`d′ ≥ 0`), `-1` otherwise.
pub fn check_collision(config: &DVector<f64>, ws: &Workspace) -> Result<Vec<i8>> {
    let caps = link_capsules(&ws.robot, config)?;
    let mut labels = vec![-1i8; ws.num_categories];
    for ob in &ws.prepared {
        if labels[ob.category] == 1 {
            continue;
        }
        for cap in &caps {
            if pair_signed_distance_prepared(cap, ob) >= 0.0 {
                labels[ob.category] = 1;
                break;
            }
        }
    }
    Ok(labels)
}

/// Penetration depth (minimal separating translation) of an overlapping
/// capsule/obstacle pair. Calling it on a disjoint pair is a contract
/// violation and returns [`Error::DisjointShapes`].
pub fn minimal_translation_distance(capsule: &Capsule, obstacle: &Obstacle) -> Result<f64> {
    let v = pair_signed_distance(capsule, obstacle);
    if v < 0.0 {
        Err(Error::DisjointShapes)
    } else {
        Ok(v)
    }
}

/// Workspace handle that counts ground-truth queries. One call to
/// [`Oracle::check`] or [`Oracle::signed`] is one query regardless of how
/// many obstacles the scene holds; reports and benchmarks read the counter
/// back so their bookkeeping can be audited against it.
pub struct Oracle<'w> {
    ws: &'w Workspace,
    calls: AtomicU64,
}

impl<'w> Oracle<'w> {
    pub fn new(ws: &'w Workspace) -> Self {
        Self { ws, calls: AtomicU64::new(0) }
    }

    pub fn workspace(&self) -> &Workspace {
        self.ws
    }

    pub fn check(&self, config: &DVector<f64>) -> Result<Vec<i8>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        check_collision(config, self.ws)
    }

    pub fn signed(&self, config: &DVector<f64>) -> Result<DVector<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        signed_distance(config, self.ws)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reference::reference_pair_distance;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn thin_two_link() -> RobotGeometry {
        RobotGeometry::new(vec![1.0, 1.0], 0.0, [0.0, 0.0], vec![None, None]).unwrap()
    }

    #[test]
    fn far_circle_is_free_in_every_category() {
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("far", [100.0, 100.0], 1.0, 0)],
            1,
        )
        .unwrap();
        assert_eq!(check_collision(&cfg(&[0.3, -0.8]), &ws).unwrap(), vec![-1]);
    }

    #[test]
    fn straddling_obstacles_label_their_own_categories() {
        // circle sits on link 1's midpoint, square covers the end effector
        let robot = thin_two_link();
        let x = cfg(&[0.3, 0.4]);
        let pts = control_points(&robot, &x).unwrap();
        let mid = pts[0] / 2.0;
        let ws = Workspace::new(
            robot,
            vec![
                Obstacle::circle("on-link-1", [mid.x, mid.y], 0.05, 0),
                Obstacle::rect("on-ee", [pts[1].x, pts[1].y], 0.2, 0.2, 1),
            ],
            3,
        )
        .unwrap();
        assert_eq!(check_collision(&x, &ws).unwrap(), vec![1, 1, -1]);
        // rotate the arm far away: everything clears
        assert_eq!(check_collision(&cfg(&[PI, 0.0]), &ws).unwrap(), vec![-1, -1, -1]);
    }

    #[test]
    fn stretched_arm_clearance_to_circle_above() {
        // segment (0,0)-(2,0), circle center (0,3) radius 1 → clearance 2
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("above", [0.0, 3.0], 1.0, 0)],
            1,
        )
        .unwrap();
        let d = signed_distance(&cfg(&[0.0, 0.0]), &ws).unwrap();
        assert_abs_diff_eq!(d[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn tip_touching_circle_boundary_is_zero_and_colliding() {
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("touch", [3.0, 0.0], 1.0, 0)],
            1,
        )
        .unwrap();
        let d = signed_distance(&cfg(&[0.0, 0.0]), &ws).unwrap();
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-12);
        assert_eq!(check_collision(&cfg(&[0.0, 0.0]), &ws).unwrap(), vec![1]);
    }

    #[test]
    fn shallow_square_penetration_matches_reference_oracle() {
        // tip pokes 0.25 into a unit square
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::rect("box", [2.25, 0.0], 1.0, 1.0, 0)],
            1,
        )
        .unwrap();
        let x = cfg(&[0.0, 0.0]);
        let d = signed_distance(&x, &ws).unwrap();
        assert_abs_diff_eq!(d[0], 0.25, epsilon = 1e-9);
        let caps = link_capsules(&ws.robot, &x).unwrap();
        let reference = reference_pair_distance(&caps[1], &ws.obstacles[0]);
        assert_abs_diff_eq!(d[0], reference, epsilon = 1e-6);
    }

    #[test]
    fn empty_category_reports_negative_infinity() {
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("only-cat-0", [5.0, 5.0], 0.5, 0)],
            2,
        )
        .unwrap();
        let d = signed_distance(&cfg(&[0.0, 0.0]), &ws).unwrap();
        assert!(d[0].is_finite());
        assert_eq!(d[1], f64::NEG_INFINITY);
    }

    #[test]
    fn mtd_of_unit_circle_centered_on_thin_link() {
        let cap = Capsule { a: Vector2::new(0.0, 0.0), b: Vector2::new(2.0, 0.0), radius: 0.0 };
        let ob = Obstacle::circle("c", [1.0, 0.0], 1.0, 0);
        assert_abs_diff_eq!(minimal_translation_distance(&cap, &ob).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mtd_of_concentric_circles_is_radius_sum() {
        // degenerate capsule (a point with radius) against a circle
        let cap = Capsule { a: Vector2::new(1.0, 1.0), b: Vector2::new(1.0, 1.0), radius: 0.5 };
        let ob = Obstacle::circle("c", [1.0, 1.0], 1.0, 0);
        assert_abs_diff_eq!(minimal_translation_distance(&cap, &ob).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn mtd_on_disjoint_pair_is_a_contract_violation() {
        let cap = Capsule { a: Vector2::new(0.0, 0.0), b: Vector2::new(1.0, 0.0), radius: 0.1 };
        let ob = Obstacle::circle("c", [5.0, 0.0], 1.0, 0);
        assert!(matches!(minimal_translation_distance(&cap, &ob), Err(Error::DisjointShapes)));
    }

    #[test]
    fn base_covering_obstacle_is_rejected() {
        let err = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("on-base", [0.0, 0.0], 0.3, 0)],
            1,
        );
        assert!(matches!(err, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn out_of_range_category_is_rejected() {
        let err = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("c", [9.0, 9.0], 0.3, 2)],
            2,
        );
        assert!(matches!(err, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn workspace_json_roundtrip_preserves_scene() {
        let ws = Workspace::new(
            RobotGeometry::new(
                vec![1.0, 0.5],
                0.08,
                [0.1, -0.2],
                vec![Some([-1.0, 1.0]), None],
            )
            .unwrap(),
            vec![
                Obstacle::circle("ball", [1.0, 1.0], 0.3, 0),
                Obstacle::rect("crate", [-1.0, 0.5], 0.4, 0.7, 1),
            ],
            2,
        )
        .unwrap();
        let json = serde_json::to_string(&ws).unwrap();
        let back: Workspace = serde_json::from_str(&json).unwrap();
        assert_eq!(back.robot, ws.robot);
        assert_eq!(back.obstacles, ws.obstacles);
        assert_eq!(back.num_categories, 2);
        // deserialization re-validates
        let bad = json.replace("\"num_categories\":2", "\"num_categories\":1");
        assert!(serde_json::from_str::<Workspace>(&bad).is_err());
    }

    #[test]
    fn signed_distance_sign_always_matches_boolean_check() {
        let robot =
            RobotGeometry::new(vec![1.0, 0.7], 0.08, [0.0, 0.0], vec![None, None]).unwrap();
        let ws = Workspace::new(
            robot,
            vec![
                Obstacle::circle("a", [1.0, 0.8], 0.35, 0),
                Obstacle::rect("b", [-0.9, -0.6], 0.6, 0.4, 1),
                Obstacle::polygon("c", vec![[0.4, -1.4], [1.0, -1.2], [0.6, -0.7]], 0),
            ],
            2,
        )
        .unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let x = cfg(&[
                    -PI + 2.0 * PI * (i as f64 + 0.5) / 40.0,
                    -PI + 2.0 * PI * (j as f64 + 0.5) / 40.0,
                ]);
                let d = signed_distance(&x, &ws).unwrap();
                let labels = check_collision(&x, &ws).unwrap();
                for c in 0..2 {
                    assert_eq!(labels[c] == 1, d[c] >= 0.0, "config {x:?} category {c}");
                }
            }
        }
    }

    #[test]
    fn signed_distance_is_translation_invariant() {
        let shift = [3.7, -1.9];
        let robot =
            RobotGeometry::new(vec![1.0, 0.7], 0.05, [0.0, 0.0], vec![None, None]).unwrap();
        let moved_robot =
            RobotGeometry::new(vec![1.0, 0.7], 0.05, shift, vec![None, None]).unwrap();
        let obstacle = |dx: f64, dy: f64| {
            vec![
                Obstacle::circle("a", [0.9 + dx, 0.9 + dy], 0.3, 0),
                Obstacle::rect("b", [-0.8 + dx, 0.4 + dy], 0.5, 0.3, 0),
            ]
        };
        let ws = Workspace::new(robot, obstacle(0.0, 0.0), 1).unwrap();
        let moved = Workspace::new(moved_robot, obstacle(shift[0], shift[1]), 1).unwrap();
        for ang in [[0.2, 0.5], [-1.0, 2.2], [2.9, -0.4]] {
            let d0 = signed_distance(&cfg(&ang), &ws).unwrap();
            let d1 = signed_distance(&cfg(&ang), &moved).unwrap();
            assert_abs_diff_eq!(d0[0], d1[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn signed_distance_is_mirror_symmetric() {
        // reflect scene about the x-axis; the mirrored configuration negates
        // every joint angle
        let robot =
            RobotGeometry::new(vec![1.0, 0.7], 0.05, [0.0, 0.0], vec![None, None]).unwrap();
        let ws = Workspace::new(
            robot.clone(),
            vec![Obstacle::circle("a", [0.8, 1.1], 0.4, 0)],
            1,
        )
        .unwrap();
        let mirrored =
            Workspace::new(robot, vec![Obstacle::circle("a", [0.8, -1.1], 0.4, 0)], 1).unwrap();
        for ang in [[0.3, 0.9], [-1.2, 0.4], [2.0, -2.5]] {
            let d0 = signed_distance(&cfg(&ang), &ws).unwrap();
            let d1 = signed_distance(&cfg(&[-ang[0], -ang[1]]), &mirrored).unwrap();
            assert_abs_diff_eq!(d0[0], d1[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn signed_distance_is_lipschitz_in_configuration() {
        let robot =
            RobotGeometry::new(vec![1.0, 1.0], 0.08, [0.0, 0.0], vec![None, None]).unwrap();
        let arm = robot.arm_length();
        let lip = arm * (robot.dof as f64).sqrt();
        let ws = Workspace::new(
            robot,
            vec![
                Obstacle::circle("a", [1.1, 0.9], 0.4, 0),
                Obstacle::rect("b", [-1.0, -0.3], 0.6, 0.8, 0),
            ],
            1,
        )
        .unwrap();
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as f64 / u64::MAX as f64
        };
        for _ in 0..300 {
            let x = cfg(&[next() * 2.0 * PI - PI, next() * 2.0 * PI - PI]);
            let delta = cfg(&[(next() - 0.5) * 0.02, (next() - 0.5) * 0.02]);
            let d0 = signed_distance(&x, &ws).unwrap();
            let d1 = signed_distance(&(&x + &delta), &ws).unwrap();
            assert!(
                (d1[0] - d0[0]).abs() <= lip * delta.norm() + 1e-9,
                "jump {} exceeds Lipschitz bound {}",
                (d1[0] - d0[0]).abs(),
                lip * delta.norm()
            );
        }
    }

    #[test]
    fn oracle_counter_tracks_every_query() {
        let ws = Workspace::new(
            thin_two_link(),
            vec![Obstacle::circle("a", [1.0, 1.0], 0.3, 0)],
            1,
        )
        .unwrap();
        let oracle = Oracle::new(&ws);
        for i in 0..7 {
            let x = cfg(&[i as f64 * 0.3, 0.1]);
            let _ = oracle.check(&x).unwrap();
        }
        let _ = oracle.signed(&cfg(&[0.0, FRAC_PI_2])).unwrap();
        assert_eq!(oracle.calls(), 8);
    }
}
