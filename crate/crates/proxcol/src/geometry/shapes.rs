//! Obstacle shapes: circles and strictly convex CCW polygons.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Workspace obstacle geometry. The serialized form is
/// `{"shape": "circle"|"polygon", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "lowercase")]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    /// Counter-clockwise, strictly convex (no collinear triples).
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Shape::Circle { center, radius }
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Self {
        Shape::Polygon { vertices }
    }

    /// Axis-aligned rectangle as a convex polygon.
    pub fn rect(center: [f64; 2], width: f64, height: f64) -> Self {
        let (hw, hh) = (width / 2.0, height / 2.0);
        let (cx, cy) = (center[0], center[1]);
        Shape::Polygon {
            vertices: vec![
                [cx - hw, cy - hh],
                [cx + hw, cy - hh],
                [cx + hw, cy + hh],
                [cx - hw, cy + hh],
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Circle { center, radius } => {
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidGeometry("circle center must be finite".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidGeometry("circle radius must be positive".into()));
                }
            }
            Shape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidGeometry(
                        "polygon needs at least three vertices".into(),
                    ));
                }
                if !vertices.iter().flatten().all(|c| c.is_finite()) {
                    return Err(Error::InvalidGeometry("polygon vertices must be finite".into()));
                }
                let n = vertices.len();
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                    if !(cross > 0.0) {
                        return Err(Error::InvalidGeometry(
                            "polygon must be strictly convex and counter-clockwise".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed containment test (boundary counts as inside).
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        match self {
            Shape::Circle { center, radius } => {
                (p - Vector2::new(center[0], center[1])).norm() <= *radius
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    (b[0] - a[0]) * (p.y - a[1]) - (b[1] - a[1]) * (p.x - a[0]) >= 0.0
                })
            }
        }
    }

    /// Reference point for pose transforms: circle center or vertex centroid.
    pub fn reference_point(&self) -> Vector2<f64> {
        match self {
            Shape::Circle { center, .. } => Vector2::new(center[0], center[1]),
            Shape::Polygon { vertices } => {
                let mut c = Vector2::zeros();
                for v in vertices {
                    c += Vector2::new(v[0], v[1]);
                }
                c / vertices.len() as f64
            }
        }
    }

    /// The shape moved so its reference point lands at `position`, rotated by
    /// `rotation` radians about that point.
    pub fn at_pose(&self, position: [f64; 2], rotation: f64) -> Shape {
        let pivot = self.reference_point();
        let target = Vector2::new(position[0], position[1]);
        let (s, c) = rotation.sin_cos();
        let place = |v: [f64; 2]| {
            let rel = Vector2::new(v[0], v[1]) - pivot;
            let rot = Vector2::new(c * rel.x - s * rel.y, s * rel.x + c * rel.y);
            let p = target + rot;
            [p.x, p.y]
        };
        match self {
            Shape::Circle { radius, .. } => Shape::Circle { center: position, radius: *radius },
            Shape::Polygon { vertices } => {
                Shape::Polygon { vertices: vertices.iter().map(|&v| place(v)).collect() }
            }
        }
    }
}
