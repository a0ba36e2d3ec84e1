//! Planar serial-chain forward kinematics.
//!
//! Joint `d` rotates everything distal to it, so the workspace position of
//! control point `m` (the far end of link `m`) depends on the cumulative
//! angle `θ_1 + … + θ_i` of every link `i ≤ m`. Angles are plain radians
//! with no normalization; periodicity falls out of `sin`/`cos`.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar arm with capsule links: segment skeleton plus a common
/// half-width. `joint_limits[d]` is `Some([lo, hi])` for a bounded revolute
/// joint and `None` for a continuous (wrap-around) one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotGeometry {
    pub dof: usize,
    pub link_lengths: Vec<f64>,
    /// Capsule half-width (radius) shared by all links.
    pub link_width: f64,
    /// Fixed base position in the workspace plane.
    pub base: [f64; 2],
    pub joint_limits: Vec<Option<[f64; 2]>>,
}

impl RobotGeometry {
    pub fn new(
        link_lengths: Vec<f64>,
        link_width: f64,
        base: [f64; 2],
        joint_limits: Vec<Option<[f64; 2]>>,
    ) -> Result<Self> {
        let dof = link_lengths.len();
        if dof == 0 {
            return Err(Error::InvalidGeometry("robot needs at least one link".into()));
        }
        if link_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidGeometry("link lengths must be positive".into()));
        }
        if !(link_width >= 0.0) || !link_width.is_finite() {
            return Err(Error::InvalidGeometry("link width must be non-negative".into()));
        }
        if joint_limits.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: joint_limits.len() });
        }
        for lim in joint_limits.iter().flatten() {
            if !(lim[0] < lim[1]) {
                return Err(Error::InvalidGeometry(format!(
                    "joint limit [{}, {}] is empty",
                    lim[0], lim[1]
                )));
            }
        }
        Ok(Self { dof, link_lengths, link_width, base, joint_limits })
    }

    /// Sum of link lengths: the arm's reach from the base.
    pub fn arm_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn base_point(&self) -> Vector2<f64> {
        Vector2::new(self.base[0], self.base[1])
    }

    fn check_config(&self, config: &DVector<f64>) -> Result<()> {
        if config.len() != self.dof {
            return Err(Error::DimensionMismatch { expected: self.dof, got: config.len() });
        }
        Ok(())
    }
}

/// Joint positions after each link, base excluded, tip included — one
/// control point per link, `robot.dof` in total. Consecutive points are
/// exactly one link length apart.
pub fn control_points(robot: &RobotGeometry, config: &DVector<f64>) -> Result<Vec<Vector2<f64>>> {
    robot.check_config(config)?;
    let mut pts = Vec::with_capacity(robot.dof);
    let mut p = robot.base_point();
    let mut angle = 0.0;
    for (d, &len) in robot.link_lengths.iter().enumerate() {
        angle += config[d];
        p += len * Vector2::new(angle.cos(), angle.sin());
        pts.push(p);
    }
    Ok(pts)
}

/// Control points flattened to `(x_1, y_1, …, x_M, y_M)`; the feature map
/// used by workspace-aware kernels.
pub fn fk_stacked(robot: &RobotGeometry, config: &DVector<f64>) -> Result<DVector<f64>> {
    let pts = control_points(robot, config)?;
    let mut v = DVector::zeros(2 * pts.len());
    for (m, p) in pts.iter().enumerate() {
        v[2 * m] = p.x;
        v[2 * m + 1] = p.y;
    }
    Ok(v)
}

/// End-effector position (last control point).
pub fn end_effector(robot: &RobotGeometry, config: &DVector<f64>) -> Result<Vector2<f64>> {
    Ok(*control_points(robot, config)?.last().expect("dof >= 1"))
}

/// Jacobian of [`fk_stacked`]: rows are (x, y) pairs per control point,
/// columns are joints. Point `m` does not depend on joints distal to it,
/// so rows `2m, 2m+1` have zeros in columns `d > m`. For `d ≤ m` the
/// derivative is the lever arm from joint `d` to point `m`, rotated 90°.
pub fn fk_jacobian(robot: &RobotGeometry, config: &DVector<f64>) -> Result<DMatrix<f64>> {
    robot.check_config(config)?;
    let pts = control_points(robot, config)?;
    let mut jac = DMatrix::zeros(2 * robot.dof, robot.dof);
    for m in 0..robot.dof {
        let pm = pts[m];
        for d in 0..=m {
            // Joint d sits at the end of link d-1 (the base for d = 0).
            let joint = if d == 0 { robot.base_point() } else { pts[d - 1] };
            let lever = pm - joint;
            jac[(2 * m, d)] = -lever.y;
            jac[(2 * m + 1, d)] = lever.x;
        }
    }
    Ok(jac)
}
