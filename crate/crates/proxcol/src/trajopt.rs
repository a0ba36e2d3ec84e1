//! Penalty-method trajectory optimization with the learned collision score
//! as an inequality constraint.
//!
//! The objective is path length in Cartesian control-point space (plus an
//! optional joint-space term); constraints are the biased collision score at
//! every free waypoint, joint-space and end-effector step bounds per segment,
//! and joint boxes. Inequalities enter through hinge terms `μ·|g|⁺`; the
//! endpoints are frozen out of the decision variables, so no equality terms
//! are needed. First-order Adam updates drive the free waypoints; a verified
//! solution is accepted the moment the optimizer's own constraints are all
//! satisfied *and* the ground-truth oracle confirms the densified trajectory.
//!
//! Three gradient modes share the identical penalty:
//! - `Analytic` — scorer gradients through the kinematic chain,
//! - `NumericProxy` — central differences of the proxy score,
//! - `NumericOracle` — central differences of ground-truth signed distances
//!   (the stand-in for a classical geometric-checker baseline); this mode
//!   evaluates the full finite-difference constraint Jacobian every
//!   iteration, which is what the oracle-call comparison measures.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Oracle, Workspace};
use crate::kinematics::{fk_jacobian, fk_stacked};
use crate::scorer::SupportModel;

/// Default escape step size (rad).
pub const DEFAULT_ESCAPE_STEP: f64 = 0.05;

/// A discretized joint-space path. The first and last waypoints are the
/// boundary conditions and are never altered by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrajectoryFile", try_from = "TrajectoryFile")]
pub struct Trajectory {
    pub waypoints: Vec<DVector<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    waypoints: Vec<Vec<f64>>,
    dof: usize,
}

impl From<Trajectory> for TrajectoryFile {
    fn from(t: Trajectory) -> Self {
        let dof = t.dof();
        TrajectoryFile {
            waypoints: t.waypoints.into_iter().map(|w| w.iter().copied().collect()).collect(),
            dof,
        }
    }
}

impl TryFrom<TrajectoryFile> for Trajectory {
    type Error = Error;

    fn try_from(f: TrajectoryFile) -> Result<Self> {
        let waypoints: Vec<DVector<f64>> =
            f.waypoints.into_iter().map(DVector::from_vec).collect();
        if waypoints.iter().any(|w| w.len() != f.dof) {
            return Err(Error::InvalidInput("waypoint length disagrees with dof".into()));
        }
        Trajectory::new(waypoints)
    }
}

impl Trajectory {
    pub fn new(waypoints: Vec<DVector<f64>>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidInput("a trajectory needs at least 2 waypoints".into()));
        }
        let dof = waypoints[0].len();
        if dof == 0 {
            return Err(Error::InvalidInput("zero-dimensional waypoints".into()));
        }
        if waypoints.iter().any(|w| w.len() != dof) {
            return Err(Error::InvalidInput("waypoints have mixed dimensions".into()));
        }
        if waypoints.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("waypoints must be finite".into()));
        }
        Ok(Self { waypoints })
    }

    /// Straight line in joint space from `start` to `goal` with `t` waypoints.
    pub fn straight_line(start: &DVector<f64>, goal: &DVector<f64>, t: usize) -> Result<Self> {
        if start.len() != goal.len() {
            return Err(Error::DimensionMismatch { expected: start.len(), got: goal.len() });
        }
        if t < 2 {
            return Err(Error::InvalidInput("need at least 2 waypoints".into()));
        }
        let waypoints = (0..t)
            .map(|k| {
                if k == 0 {
                    start.clone()
                } else if k == t - 1 {
                    goal.clone()
                } else {
                    let a = k as f64 / (t - 1) as f64;
                    start + (goal - start) * a
                }
            })
            .collect();
        Trajectory::new(waypoints)
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction: ≥ 2 waypoints
    }

    pub fn dof(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.waypoints[0]
    }

    pub fn goal(&self) -> &DVector<f64> {
        self.waypoints.last().unwrap()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string(self)?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// How constraint gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Analytic scorer gradients through the kinematic chain.
    Analytic,
    /// Central finite differences of the proxy score.
    NumericProxy,
    /// Central finite differences of ground-truth signed distances.
    NumericOracle,
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientMode::Analytic => "analytic",
            GradientMode::NumericProxy => "numeric-proxy",
            GradientMode::NumericOracle => "numeric-oracle",
        })
    }
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(GradientMode::Analytic),
            "numeric-proxy" => Ok(GradientMode::NumericProxy),
            "numeric-oracle" => Ok(GradientMode::NumericOracle),
            other => Err(Error::InvalidInput(format!(
                "unknown mode `{other}` (expected analytic | numeric-proxy | numeric-oracle)"
            ))),
        }
    }
}

/// Per-segment kinematic bounds used by both the optimizer and verification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KinematicLimits {
    /// Max joint-space step `‖x_{t+1} − x_t‖` per segment (rad).
    pub omega_max: f64,
    /// Max end-effector displacement per segment (m).
    pub v_max: f64,
}

/// Everything one trajectory query needs. Construct with [`ProblemSpec::new`]
/// for defaults, then adjust fields directly.
#[derive(Debug, Clone)]
pub struct ProblemSpec<'a> {
    pub model: &'a SupportModel,
    /// Ground-truth workspace, used only for verification (and for gradients
    /// in [`GradientMode::NumericOracle`]).
    pub workspace: &'a Workspace,
    pub x_start: DVector<f64>,
    pub x_goal: DVector<f64>,
    /// Waypoint count for initial trajectories built from this spec.
    pub t: usize,
    pub limits: KinematicLimits,
    /// Cartesian path-length weight.
    pub w_p: f64,
    /// Joint-space path-length weight.
    pub w_theta: f64,
    /// Penalty weight on every inequality hinge.
    pub mu: f64,
    /// Adam step size (rad).
    pub step_size: f64,
    /// Gradient iterations per attempt.
    pub max_iterations: usize,
    /// Iterations to run before the first-feasible exit is allowed. The
    /// default 0 stops an attempt at the first iterate whose constraints
    /// hold — cheapest for planning. Raising it lets the objective settle
    /// against the active constraints first, so the solution's geometry
    /// reflects the biases rather than wherever the penalty descent
    /// happened to cross into feasibility.
    pub min_iterations: usize,
    /// Random restarts after the caller's initialization fails.
    pub max_restarts: usize,
    /// Joint-space spacing of ground-truth verification (rad).
    pub verify_resolution: f64,
    /// Central-difference step for the numeric modes (rad).
    pub fd_step: f64,
    /// Every this many iterations, waypoints are re-spaced uniformly along
    /// the joint-space polyline (0 disables). Without it the waypoints
    /// cluster on either side of an obstacle and the connecting segment cuts
    /// straight through — a stable equilibrium the hinges cannot see.
    pub redistribute_every: usize,
    /// Collision constraints are evaluated at each free waypoint and at
    /// `collision_substeps − 1` evenly spaced interior points of every
    /// segment (1 = waypoints only). Interior points close the gap between
    /// the discrete constraint set and the densified verification: two safe
    /// waypoints may straddle an obstacle with the chord cutting through it,
    /// and no waypoint gradient would ever push the chord around.
    pub collision_substeps: usize,
    /// Safety bias added to oracle signed distances in numeric-oracle mode
    /// (the model's own per-category bias plays this role in proxy modes).
    pub oracle_bias: f64,
    pub seed: u64,
}

impl<'a> ProblemSpec<'a> {
    pub fn new(
        model: &'a SupportModel,
        workspace: &'a Workspace,
        x_start: DVector<f64>,
        x_goal: DVector<f64>,
    ) -> Result<Self> {
        if model.robot != workspace.robot {
            return Err(Error::InvalidInput(
                "model and workspace describe different robots".into(),
            ));
        }
        let dof = model.dof();
        if x_start.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: x_start.len() });
        }
        if x_goal.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: x_goal.len() });
        }
        let arm = model.robot.arm_length();
        Ok(Self {
            model,
            workspace,
            x_start,
            x_goal,
            t: 20,
            limits: KinematicLimits { omega_max: 0.5, v_max: 0.3 * arm },
            w_p: 1.0,
            w_theta: 0.0,
            mu: 10.0,
            step_size: 0.05,
            max_iterations: 200,
            min_iterations: 0,
            max_restarts: 3,
            verify_resolution: 0.01,
            fd_step: 1e-4,
            redistribute_every: 25,
            collision_substeps: 2,
            oracle_bias: 0.05,
            seed: 0,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::InvalidInput("t must be at least 2".into()));
        }
        if self.limits.omega_max <= 0.0 || self.limits.v_max <= 0.0 {
            return Err(Error::InvalidInput("step limits must be positive".into()));
        }
        if self.w_p < 0.0 || self.w_theta < 0.0 || self.mu < 0.0 {
            return Err(Error::InvalidInput("weights must be non-negative".into()));
        }
        if self.step_size <= 0.0 || self.fd_step <= 0.0 || self.verify_resolution <= 0.0 {
            return Err(Error::InvalidInput("step sizes must be positive".into()));
        }
        if self.collision_substeps == 0 {
            return Err(Error::InvalidInput("collision_substeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Straight-line initialization between the spec's endpoints.
    pub fn straight_init(&self) -> Result<Trajectory> {
        Trajectory::straight_line(&self.x_start, &self.x_goal, self.t)
    }
}

/// One ground-truth rule the trajectory broke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// Worst collision on a segment (waypoints included at `along = 0`).
    Collision { segment: usize, along: f64, category: usize, depth: f64 },
    JointStep { segment: usize, excess: f64 },
    EeStep { segment: usize, excess: f64 },
    JointBox { waypoint: usize, joint: usize, excess: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Max positive violation per constraint family; all zero for a feasible
/// trajectory. (Positive parts keep reports JSON-safe.)
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MaxViolations {
    pub collision_depth: f64,
    pub joint_step: f64,
    pub ee_step: f64,
    pub joint_box: f64,
}

impl MaxViolations {
    pub fn from_violations(violations: &[Violation]) -> Self {
        let mut m = MaxViolations::default();
        for v in violations {
            match *v {
                Violation::Collision { depth, .. } => {
                    m.collision_depth = m.collision_depth.max(depth)
                }
                Violation::JointStep { excess, .. } => m.joint_step = m.joint_step.max(excess),
                Violation::EeStep { excess, .. } => m.ee_step = m.ee_step.max(excess),
                Violation::JointBox { excess, .. } => m.joint_box = m.joint_box.max(excess),
            }
        }
        m
    }
}

/// Outcome of one optimization query. Deliberately carries no wall time, so
/// identical seeds serialize to identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    /// Ground-truth verified at the spec's resolution.
    pub feasible: bool,
    pub mode: GradientMode,
    /// Gradient iterations consumed across all attempts.
    pub iterations: usize,
    /// Random restarts consumed (0 when the first initialization succeeded).
    pub restarts: usize,
    /// Proxy score evaluations (one per score call, including FD probes).
    pub proxy_checks: u64,
    /// Ground-truth oracle evaluations (gradients, feasibility, verification).
    pub oracle_checks: u64,
    pub objective: f64,
    pub max_violation: MaxViolations,
    /// True when the returned trajectory came out of the repair stage.
    pub repair_used: bool,
}

impl SolveReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Cartesian-plus-joint path length of the trajectory.
pub fn objective(traj: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    let robot = &spec.model.robot;
    let mut f = 0.0;
    let mut prev = fk_stacked(robot, &traj.waypoints[0])?;
    for t in 1..traj.len() {
        let cur = fk_stacked(robot, &traj.waypoints[t])?;
        let dx = &traj.waypoints[t] - &traj.waypoints[t - 1];
        f += spec.w_p * (&cur - &prev).norm_squared() + spec.w_theta * dx.norm_squared();
        prev = cur;
    }
    Ok(f)
}

/// Penalty objective `h = f + μ·Σ hinges`, with the proxy score supplying the
/// collision terms (all gradient modes optimize this same function; the
/// numeric-oracle mode substitutes oracle distances for the score).
pub fn penalty_objective(traj: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    let eval = ColEval::Analytic { model: spec.model };
    let scratch = Cell::new(0);
    penalty_with(traj, spec, &eval, &scratch)
}

fn penalty_with(
    traj: &Trajectory,
    spec: &ProblemSpec,
    eval: &ColEval,
    proxy_checks: &Cell<u64>,
) -> Result<f64> {
    let mut h = objective(traj, spec)?;
    h += spec.mu * hinge_sum(traj, spec, eval, proxy_checks)?;
    Ok(h)
}

/// Σ over free waypoints and segments of all inequality hinges (unweighted).
fn hinge_sum(
    traj: &Trajectory,
    spec: &ProblemSpec,
    eval: &ColEval,
    proxy_checks: &Cell<u64>,
) -> Result<f64> {
    let robot = &spec.model.robot;
    let mut s = 0.0;
    for t in 1..traj.len() - 1 {
        s += eval.hinge_value(&traj.waypoints[t], proxy_checks)?;
        s += box_hinges(&traj.waypoints[t], robot);
    }
    for (_, _, x) in interior_points(traj, spec.collision_substeps) {
        s += eval.hinge_value(&x, proxy_checks)?;
    }
    let mut prev_ee = end_effector(robot, &traj.waypoints[0])?;
    for t in 1..traj.len() {
        let dx = (&traj.waypoints[t] - &traj.waypoints[t - 1]).norm();
        s += (dx - spec.limits.omega_max).max(0.0);
        let ee = end_effector(robot, &traj.waypoints[t])?;
        s += ((&ee - &prev_ee).norm() - spec.limits.v_max).max(0.0);
        prev_ee = ee;
    }
    Ok(s)
}

/// Interior collision-constraint points of every segment: `substeps − 1`
/// evenly spaced configurations strictly between consecutive waypoints
/// (the waypoints themselves are covered by the per-waypoint terms).
fn interior_points(
    traj: &Trajectory,
    substeps: usize,
) -> impl Iterator<Item = (usize, f64, DVector<f64>)> + '_ {
    (0..traj.len() - 1).flat_map(move |s| {
        (1..substeps).map(move |i| {
            let a = i as f64 / substeps as f64;
            let x = &traj.waypoints[s] + (&traj.waypoints[s + 1] - &traj.waypoints[s]) * a;
            (s, a, x)
        })
    })
}

fn box_hinges(x: &DVector<f64>, robot: &crate::kinematics::RobotGeometry) -> f64 {
    let mut s = 0.0;
    for (d, lim) in robot.joint_limits.iter().enumerate() {
        if let Some([lo, hi]) = lim {
            s += (lo - x[d]).max(0.0) + (x[d] - hi).max(0.0);
        }
    }
    s
}

fn end_effector(
    robot: &crate::kinematics::RobotGeometry,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let fk = fk_stacked(robot, x)?;
    let n = fk.len();
    Ok(DVector::from_column_slice(&[fk[n - 2], fk[n - 1]]))
}

/// Collision-constraint evaluator, the only mode-dependent ingredient.
enum ColEval<'a> {
    Analytic { model: &'a SupportModel },
    Proxy { model: &'a SupportModel, fd_step: f64 },
    OracleDist { oracle: &'a Oracle<'a>, bias: f64, fd_step: f64 },
}

impl ColEval<'_> {
    /// `Σ_c |g_c(x)|⁺` where `g` is the mode's collision constraint.
    fn hinge_value(&self, x: &DVector<f64>, proxy_checks: &Cell<u64>) -> Result<f64> {
        match self {
            ColEval::Analytic { model } | ColEval::Proxy { model, .. } => {
                proxy_checks.set(proxy_checks.get() + 1);
                let g = model.biased(x)?;
                Ok(g.iter().map(|v| v.max(0.0)).sum())
            }
            ColEval::OracleDist { oracle, bias, .. } => {
                let d = oracle.signed(x)?;
                Ok(d.iter().map(|v| (v + bias).max(0.0)).sum())
            }
        }
    }

    /// Whether every collision constraint holds at `x`.
    fn feasible(&self, x: &DVector<f64>, proxy_checks: &Cell<u64>) -> Result<bool> {
        match self {
            ColEval::Analytic { model } | ColEval::Proxy { model, .. } => {
                proxy_checks.set(proxy_checks.get() + 1);
                Ok(model.biased(x)?.iter().all(|&v| v <= 0.0))
            }
            ColEval::OracleDist { oracle, bias, .. } => {
                Ok(oracle.signed(x)?.iter().all(|&v| v + bias <= 0.0))
            }
        }
    }

    /// Gradient of [`ColEval::hinge_value`]. The numeric modes evaluate the
    /// full central-difference stencil every call — no activity shortcut —
    /// since a derivative-free baseline pays that cost unconditionally.
    fn hinge_grad(&self, x: &DVector<f64>, proxy_checks: &Cell<u64>) -> Result<DVector<f64>> {
        match self {
            ColEval::Analytic { model } => {
                proxy_checks.set(proxy_checks.get() + 1);
                let (psi, jac) = model.score_with_gradient(x)?;
                let mut g = DVector::zeros(x.len());
                for c in 0..psi.len() {
                    if psi[c] + model.bias[c] > 0.0 {
                        for d in 0..x.len() {
                            g[d] += jac[(c, d)];
                        }
                    }
                }
                Ok(g)
            }
            ColEval::Proxy { fd_step, .. } | ColEval::OracleDist { fd_step, .. } => {
                let h = *fd_step;
                let mut g = DVector::zeros(x.len());
                let mut xp = x.clone();
                for d in 0..x.len() {
                    let orig = x[d];
                    xp[d] = orig + h;
                    let fp = self.hinge_value(&xp, proxy_checks)?;
                    xp[d] = orig - h;
                    let fm = self.hinge_value(&xp, proxy_checks)?;
                    xp[d] = orig;
                    g[d] = (fp - fm) / (2.0 * h);
                }
                Ok(g)
            }
        }
    }
}

/// Gradient of the full penalty `h` with respect to the free waypoints,
/// flattened in waypoint-major order.
fn penalty_gradient(
    traj: &Trajectory,
    spec: &ProblemSpec,
    eval: &ColEval,
    proxy_checks: &Cell<u64>,
) -> Result<DVector<f64>> {
    let robot = &spec.model.robot;
    let t_count = traj.len();
    let dof = traj.dof();
    let free = t_count - 2;
    let mut grad = DVector::zeros(free * dof);

    // shared kinematics for objective and step constraints
    let fks: Vec<DVector<f64>> =
        traj.waypoints.iter().map(|w| fk_stacked(robot, w)).collect::<Result<_>>()?;
    let jacs: Vec<Option<DMatrix<f64>>> = (0..t_count)
        .map(|t| {
            if t == 0 || t == t_count - 1 {
                Ok(None)
            } else {
                fk_jacobian(robot, &traj.waypoints[t]).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    for t in 1..t_count - 1 {
        let jac = jacs[t].as_ref().unwrap();
        let x = &traj.waypoints[t];
        let mut g = DVector::zeros(dof);

        // objective: both adjacent Cartesian and joint terms
        let d_prev = &fks[t] - &fks[t - 1];
        let d_next = &fks[t] - &fks[t + 1];
        let cart = jac.transpose() * (d_prev + d_next) * (2.0 * spec.w_p);
        g += cart;
        if spec.w_theta != 0.0 {
            let joint =
                (x * 2.0 - &traj.waypoints[t - 1] - &traj.waypoints[t + 1]) * (2.0 * spec.w_theta);
            g += joint;
        }

        // collision hinge at the waypoint itself
        g += eval.hinge_grad(x, proxy_checks)? * spec.mu;

        // joint boxes
        for (d, lim) in robot.joint_limits.iter().enumerate() {
            if let Some([lo, hi]) = lim {
                if x[d] < *lo {
                    g[d] -= spec.mu;
                }
                if x[d] > *hi {
                    g[d] += spec.mu;
                }
            }
        }

        for (dd, gd) in g.iter().enumerate() {
            grad[(t - 1) * dof + dd] = *gd;
        }
    }

    // interior collision points: the chain rule through the interpolation
    // x(a) = (1−a)·x_s + a·x_{s+1} splits the gradient between the two
    // bracketing waypoints
    for (s, a, x) in interior_points(traj, spec.collision_substeps) {
        let g = eval.hinge_grad(&x, proxy_checks)? * spec.mu;
        add_free(&mut grad, s, t_count, dof, &(&g * (1.0 - a)));
        add_free(&mut grad, s + 1, t_count, dof, &(g * a));
    }

    // segment step hinges touch the waypoints on both ends
    for s in 0..t_count - 1 {
        let dx = &traj.waypoints[s + 1] - &traj.waypoints[s];
        let n = dx.norm();
        if n - spec.limits.omega_max > 0.0 && n > 1e-12 {
            let u = dx / n;
            add_free(&mut grad, s, t_count, dof, &(-&u * spec.mu));
            add_free(&mut grad, s + 1, t_count, dof, &(u * spec.mu));
        }
        let dee_full = &fks[s + 1] - &fks[s];
        let m2 = dee_full.len();
        let dee = DVector::from_column_slice(&[dee_full[m2 - 2], dee_full[m2 - 1]]);
        let ne = dee.norm();
        if ne - spec.limits.v_max > 0.0 && ne > 1e-12 {
            let u = dee / ne;
            for (t, sign) in [(s, -1.0), (s + 1, 1.0)] {
                if t == 0 || t == t_count - 1 {
                    continue;
                }
                let jac = jacs[t].as_ref().unwrap();
                let jee = jac.rows(m2 - 2, 2);
                let contrib = jee.transpose() * &u * (sign * spec.mu);
                add_free(&mut grad, t, t_count, dof, &contrib);
            }
        }
    }
    Ok(grad)
}

fn add_free(grad: &mut DVector<f64>, t: usize, t_count: usize, dof: usize, v: &DVector<f64>) {
    if t == 0 || t == t_count - 1 {
        return;
    }
    for d in 0..dof {
        grad[(t - 1) * dof + d] += v[d];
    }
}

struct Adam {
    m: DVector<f64>,
    v: DVector<f64>,
    t: i32,
    step: f64,
}

impl Adam {
    fn new(dim: usize, step: f64) -> Self {
        Self { m: DVector::zeros(dim), v: DVector::zeros(dim), t: 0, step }
    }

    fn update(&mut self, params: &mut DVector<f64>, grad: &DVector<f64>) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.step * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

fn flatten_free(traj: &Trajectory) -> DVector<f64> {
    let dof = traj.dof();
    let free = traj.len() - 2;
    let mut z = DVector::zeros(free * dof);
    for t in 1..traj.len() - 1 {
        for d in 0..dof {
            z[(t - 1) * dof + d] = traj.waypoints[t][d];
        }
    }
    z
}

fn unflatten(z: &DVector<f64>, start: &DVector<f64>, goal: &DVector<f64>, t_count: usize) -> Trajectory {
    let dof = start.len();
    let mut waypoints = Vec::with_capacity(t_count);
    waypoints.push(start.clone());
    for t in 1..t_count - 1 {
        waypoints.push(DVector::from_fn(dof, |d, _| z[(t - 1) * dof + d]));
    }
    waypoints.push(goal.clone());
    Trajectory { waypoints }
}

/// Whether the optimizer's own constraints (mode collision + kinematics) all
/// hold — the trigger for running ground-truth verification.
fn mode_feasible(
    traj: &Trajectory,
    spec: &ProblemSpec,
    eval: &ColEval,
    proxy_checks: &Cell<u64>,
) -> Result<bool> {
    let robot = &spec.model.robot;
    for t in 1..traj.len() - 1 {
        if !eval.feasible(&traj.waypoints[t], proxy_checks)? {
            return Ok(false);
        }
        if box_hinges(&traj.waypoints[t], robot) > 0.0 {
            return Ok(false);
        }
    }
    for (_, _, x) in interior_points(traj, spec.collision_substeps) {
        if !eval.feasible(&x, proxy_checks)? {
            return Ok(false);
        }
    }
    let mut prev_ee = end_effector(robot, &traj.waypoints[0])?;
    for t in 1..traj.len() {
        if (&traj.waypoints[t] - &traj.waypoints[t - 1]).norm() > spec.limits.omega_max {
            return Ok(false);
        }
        let ee = end_effector(robot, &traj.waypoints[t])?;
        if (&ee - &prev_ee).norm() > spec.limits.v_max {
            return Ok(false);
        }
        prev_ee = ee;
    }
    Ok(true)
}

enum AttemptOutcome {
    /// Mode-feasible and ground-truth verified.
    Verified,
    /// Mode-feasible but the oracle disagrees — a proxy blind spot; there is
    /// no gradient signal left, so the attempt aborts.
    BlindSpot(VerifyOutcome),
    /// Iteration cap reached without mode feasibility.
    Cap,
}

struct AttemptResult {
    trajectory: Trajectory,
    iterations: usize,
    final_penalty: f64,
    outcome: AttemptOutcome,
}

/// Re-space the waypoints uniformly along the joint-space polyline; the path
/// geometry is preserved, only the parameterization changes.
fn redistribute(traj: &Trajectory) -> Trajectory {
    let t_count = traj.len();
    let mut cum = Vec::with_capacity(t_count);
    cum.push(0.0);
    for s in 1..t_count {
        let d = (&traj.waypoints[s] - &traj.waypoints[s - 1]).norm();
        cum.push(cum[s - 1] + d);
    }
    let total = cum[t_count - 1];
    if total < 1e-12 {
        return traj.clone();
    }
    let mut waypoints = Vec::with_capacity(t_count);
    waypoints.push(traj.waypoints[0].clone());
    let mut seg = 0;
    for k in 1..t_count - 1 {
        let target = total * k as f64 / (t_count - 1) as f64;
        while seg + 2 < t_count && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let a = if span < 1e-12 { 0.0 } else { (target - cum[seg]) / span };
        waypoints
            .push(&traj.waypoints[seg] + (&traj.waypoints[seg + 1] - &traj.waypoints[seg]) * a);
    }
    waypoints.push(traj.waypoints[t_count - 1].clone());
    Trajectory { waypoints }
}

fn run_attempt(
    spec: &ProblemSpec,
    init: &Trajectory,
    eval: &ColEval,
    oracle: &Oracle,
    proxy_checks: &Cell<u64>,
) -> Result<AttemptResult> {
    let t_count = init.len();
    let mut z = flatten_free(init);
    let mut adam = Adam::new(z.len(), spec.step_size);
    let mut iterations = 0;
    loop {
        let mut traj = unflatten(&z, &spec.x_start, &spec.x_goal, t_count);
        if spec.redistribute_every > 0
            && iterations > 0
            && iterations % spec.redistribute_every == 0
        {
            traj = redistribute(&traj);
            z = flatten_free(&traj);
            adam = Adam::new(z.len(), spec.step_size);
        }
        if iterations >= spec.min_iterations && mode_feasible(&traj, spec, eval, proxy_checks)? {
            let v = verify_counted(&traj, oracle, &spec.limits, spec.verify_resolution)?;
            let final_penalty = penalty_with(&traj, spec, eval, proxy_checks)?;
            let outcome =
                if v.feasible { AttemptOutcome::Verified } else { AttemptOutcome::BlindSpot(v) };
            return Ok(AttemptResult { trajectory: traj, iterations, final_penalty, outcome });
        }
        if iterations >= spec.max_iterations || z.is_empty() {
            let final_penalty = penalty_with(&traj, spec, eval, proxy_checks)?;
            return Ok(AttemptResult {
                trajectory: traj,
                iterations,
                final_penalty,
                outcome: AttemptOutcome::Cap,
            });
        }
        let grad = penalty_gradient(&traj, spec, eval, proxy_checks)?;
        adam.update(&mut z, &grad);
        iterations += 1;
    }
}

fn random_trajectory(spec: &ProblemSpec, t_count: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    use std::f64::consts::PI;
    let dof = spec.x_start.len();
    let mut waypoints = Vec::with_capacity(t_count);
    waypoints.push(spec.x_start.clone());
    for _ in 1..t_count - 1 {
        let w = DVector::from_fn(dof, |d, _| match spec.model.robot.joint_limits[d] {
            Some([lo, hi]) => rng.gen_range(lo..hi),
            None => rng.gen_range(-PI..PI),
        });
        waypoints.push(w);
    }
    waypoints.push(spec.x_goal.clone());
    Trajectory { waypoints }
}

fn make_eval<'a>(
    mode: GradientMode,
    spec: &ProblemSpec<'a>,
    oracle: &'a Oracle<'a>,
) -> ColEval<'a> {
    match mode {
        GradientMode::Analytic => ColEval::Analytic { model: spec.model },
        GradientMode::NumericProxy => {
            ColEval::Proxy { model: spec.model, fd_step: spec.fd_step }
        }
        GradientMode::NumericOracle => {
            ColEval::OracleDist { oracle, bias: spec.oracle_bias, fd_step: spec.fd_step }
        }
    }
}

/// Optimize from `init`, restarting with random waypoints on failure.
/// Verification (counted against the oracle) runs only when the mode's own
/// constraints are satisfied; a pass ends the solve, a fail aborts the
/// attempt. Never errors on infeasibility — that is reported in the result.
pub fn optimize(spec: &ProblemSpec, init: &Trajectory, mode: GradientMode) -> Result<SolveReport> {
    spec.validate()?;
    if init.dof() != spec.x_start.len() {
        return Err(Error::DimensionMismatch { expected: spec.x_start.len(), got: init.dof() });
    }
    if init.start() != &spec.x_start || init.goal() != &spec.x_goal {
        return Err(Error::InvalidInput("init endpoints disagree with the spec".into()));
    }
    let oracle = Oracle::new(spec.workspace);
    let eval = make_eval(mode, spec, &oracle);
    let proxy_checks = Cell::new(0u64);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut total_iterations = 0;
    let mut restarts = 0;
    let mut best: Option<AttemptResult> = None;

    for attempt in 0..=spec.max_restarts {
        let attempt_init = if attempt == 0 {
            init.clone()
        } else {
            restarts += 1;
            random_trajectory(spec, init.len(), &mut rng)
        };
        let res = run_attempt(spec, &attempt_init, &eval, &oracle, &proxy_checks)?;
        total_iterations += res.iterations;
        if matches!(res.outcome, AttemptOutcome::Verified) {
            let obj = objective(&res.trajectory, spec)?;
            return Ok(SolveReport {
                trajectory: res.trajectory,
                feasible: true,
                mode,
                iterations: total_iterations,
                restarts,
                proxy_checks: proxy_checks.get(),
                oracle_checks: oracle.calls(),
                objective: obj,
                max_violation: MaxViolations::default(),
                repair_used: false,
            });
        }
        let better = match &best {
            None => true,
            Some(b) => res.final_penalty < b.final_penalty,
        };
        if better {
            best = Some(res);
        }
    }

    // all attempts failed: report the lowest-penalty trajectory honestly
    let best = best.expect("at least one attempt ran");
    let vres = match best.outcome {
        AttemptOutcome::BlindSpot(v) => v,
        _ => verify_counted(&best.trajectory, &oracle, &spec.limits, spec.verify_resolution)?,
    };
    let obj = objective(&best.trajectory, spec)?;
    Ok(SolveReport {
        trajectory: best.trajectory,
        feasible: vres.feasible,
        mode,
        iterations: total_iterations,
        restarts,
        proxy_checks: proxy_checks.get(),
        oracle_checks: oracle.calls(),
        objective: obj,
        max_violation: MaxViolations::from_violations(&vres.violations),
        repair_used: false,
    })
}

/// Ground-truth check of every waypoint, of densified points along each
/// segment at joint-space spacing ≤ `resolution`, and of the kinematic
/// limits. At most one (worst) collision violation is recorded per segment.
pub fn verify(
    traj: &Trajectory,
    ws: &Workspace,
    limits: &KinematicLimits,
    resolution: f64,
) -> Result<VerifyOutcome> {
    let oracle = Oracle::new(ws);
    verify_counted(traj, &oracle, limits, resolution)
}

/// [`verify`] that charges its oracle calls to the caller's counter.
pub fn verify_counted(
    traj: &Trajectory,
    oracle: &Oracle,
    limits: &KinematicLimits,
    resolution: f64,
) -> Result<VerifyOutcome> {
    if resolution <= 0.0 {
        return Err(Error::InvalidInput("verification resolution must be positive".into()));
    }
    let ws = oracle.workspace();
    let robot = &ws.robot;
    let mut violations = Vec::new();

    // joint boxes per waypoint
    for (t, x) in traj.waypoints.iter().enumerate() {
        for (d, lim) in robot.joint_limits.iter().enumerate() {
            if let Some([lo, hi]) = lim {
                let excess = (lo - x[d]).max(x[d] - hi).max(0.0);
                if excess > 0.0 {
                    violations.push(Violation::JointBox { waypoint: t, joint: d, excess });
                }
            }
        }
    }

    // collisions: waypoints + densified interiors, worst point per segment
    let mut prev_ee = end_effector(robot, &traj.waypoints[0])?;
    let worst_at = |segment: usize, along: f64, x: &DVector<f64>,
                        current: &mut Option<(f64, f64, usize)>|
     -> Result<()> {
        let d = oracle.signed(x)?;
        let (mut depth, mut cat) = (0.0f64, 0usize);
        for c in 0..d.len() {
            if d[c] > depth {
                depth = d[c];
                cat = c;
            }
        }
        if depth > 0.0 {
            let replace = match current {
                None => true,
                Some((best, _, _)) => depth > *best,
            };
            if replace {
                *current = Some((depth, along, cat));
            }
        }
        let _ = segment;
        Ok(())
    };

    for s in 0..traj.len() - 1 {
        let a = &traj.waypoints[s];
        let b = &traj.waypoints[s + 1];
        let mut worst: Option<(f64, f64, usize)> = None;
        worst_at(s, 0.0, a, &mut worst)?;
        let dx = b - a;
        let steps = (dx.norm() / resolution).ceil() as usize;
        for k in 1..steps {
            let along = k as f64 / steps as f64;
            let x = a + &dx * along;
            worst_at(s, along, &x, &mut worst)?;
        }
        if s == traj.len() - 2 {
            worst_at(s, 1.0, b, &mut worst)?;
        }
        if let Some((depth, along, category)) = worst {
            violations.push(Violation::Collision { segment: s, along, category, depth });
        }

        // kinematic limits
        let step = dx.norm();
        if step > limits.omega_max {
            violations.push(Violation::JointStep { segment: s, excess: step - limits.omega_max });
        }
        let ee = end_effector(robot, b)?;
        let dee = (&ee - &prev_ee).norm();
        if dee > limits.v_max {
            violations.push(Violation::EeStep { segment: s, excess: dee - limits.v_max });
        }
        prev_ee = ee;
    }

    Ok(VerifyOutcome { feasible: violations.is_empty(), violations })
}

/// Ground-truth repair: one numeric-oracle continuation from `traj`, no
/// restarts. Already-feasible input is returned unchanged with zero
/// iterations. The repaired trajectory is returned only when it has no more
/// violations than the input had; otherwise the input is reported as-is
/// (so repair can never make things worse).
pub fn repair(traj: &Trajectory, spec: &ProblemSpec) -> Result<SolveReport> {
    spec.validate()?;
    let oracle = Oracle::new(spec.workspace);
    let before = verify_counted(traj, &oracle, &spec.limits, spec.verify_resolution)?;
    if before.feasible {
        let obj = objective(traj, spec)?;
        return Ok(SolveReport {
            trajectory: traj.clone(),
            feasible: true,
            mode: GradientMode::NumericOracle,
            iterations: 0,
            restarts: 0,
            proxy_checks: 0,
            oracle_checks: oracle.calls(),
            objective: obj,
            max_violation: MaxViolations::default(),
            repair_used: false,
        });
    }
    let eval = make_eval(GradientMode::NumericOracle, spec, &oracle);
    let proxy_checks = Cell::new(0u64);
    let res = run_attempt(spec, traj, &eval, &oracle, &proxy_checks)?;
    let after = match res.outcome {
        AttemptOutcome::Verified => VerifyOutcome { feasible: true, violations: Vec::new() },
        AttemptOutcome::BlindSpot(v) => v,
        AttemptOutcome::Cap => {
            verify_counted(&res.trajectory, &oracle, &spec.limits, spec.verify_resolution)?
        }
    };
    if after.violations.len() <= before.violations.len() {
        let obj = objective(&res.trajectory, spec)?;
        Ok(SolveReport {
            trajectory: res.trajectory,
            feasible: after.feasible,
            mode: GradientMode::NumericOracle,
            iterations: res.iterations,
            restarts: 0,
            proxy_checks: proxy_checks.get(),
            oracle_checks: oracle.calls(),
            objective: obj,
            max_violation: MaxViolations::from_violations(&after.violations),
            repair_used: true,
        })
    } else {
        let obj = objective(traj, spec)?;
        Ok(SolveReport {
            trajectory: traj.clone(),
            feasible: false,
            mode: GradientMode::NumericOracle,
            iterations: res.iterations,
            restarts: 0,
            proxy_checks: proxy_checks.get(),
            oracle_checks: oracle.calls(),
            objective: obj,
            max_violation: MaxViolations::from_violations(&before.violations),
            repair_used: false,
        })
    }
}

/// Gradient-descent path out of predicted collision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapePath {
    /// All intermediate configurations, starting at the input.
    pub path: Vec<DVector<f64>>,
    /// True when every biased score reached ≤ 0 within the step cap.
    pub converged: bool,
}

/// Normalized-gradient descent on the most-violated biased score. A start
/// that is already safe returns a single-point path.
pub fn escape(
    x0: &DVector<f64>,
    model: &SupportModel,
    step: f64,
    max_steps: usize,
) -> Result<EscapePath> {
    if step <= 0.0 {
        return Err(Error::InvalidInput("escape step must be positive".into()));
    }
    let mut x = x0.clone();
    let mut path = vec![x.clone()];
    for _ in 0..max_steps {
        let (psi, jac) = model.score_with_gradient(&x)?;
        let mut worst = 0;
        let mut worst_val = f64::NEG_INFINITY;
        for c in 0..psi.len() {
            let g = psi[c] + model.bias[c];
            if g > worst_val {
                worst_val = g;
                worst = c;
            }
        }
        if worst_val <= 0.0 {
            return Ok(EscapePath { path, converged: true });
        }
        let mut dir = DVector::zeros(x.len());
        for d in 0..x.len() {
            dir[d] = jac[(worst, d)];
        }
        let n = dir.norm();
        if n < 1e-12 {
            return Ok(EscapePath { path, converged: false }); // flat score: stuck
        }
        x -= dir * (step / n);
        path.push(x.clone());
    }
    let last_ok = model.biased(path.last().unwrap())?.iter().all(|&v| v <= 0.0);
    Ok(EscapePath { path, converged: last_ok })
}
