//! Differentiable proxy collision detection and safety-aware trajectory
//! optimization for planar serial manipulators.
//!
//! The pipeline, end to end:
//!
//! 1. [`geometry`] — an exact ground-truth collision oracle for capsule-link
//!    arms against circle and convex-polygon obstacles, returning boolean
//!    labels and signed distances per obstacle category.
//! 2. [`perceptron`] — a sparse multi-label kernel perceptron trained on
//!    oracle labels; its support configurations summarize the boundary of
//!    the collision set in configuration space.
//! 3. [`scorer`] — a polyharmonic interpolation of the labels (or measured
//!    distances) over the support set, yielding a smooth collision score
//!    with analytic gradients through the kinematic chain.
//! 4. [`trajopt`] — penalty-based trajectory optimization that treats the
//!    biased score as an inequality constraint, plus ground-truth
//!    verification, repair, and gradient-descent escape from collision.
//! 5. [`active`] — cheap model updates when obstacles move, by resampling
//!    around the current support set instead of retraining from scratch.
//!
//! [`harness`] glues the stages into reproducible experiments (environment
//! generation, training, benchmarks, correlation studies, moving-obstacle
//! scenarios); the `proxcol` binary is a thin CLI over it. The `examples/`
//! directory holds one runnable demo per capability.
//!
//! ```
//! use nalgebra::DVector;
//! use proxcol::prelude::*;
//!
//! // A 2-link arm and one circular obstacle.
//! let robot = RobotGeometry::new(vec![1.0, 1.0], 0.1, [0.0, 0.0], vec![None, None]).unwrap();
//! let ws = Workspace::new(
//!     robot,
//!     vec![Obstacle::circle("ball", [1.2, 1.2], 0.4, 0)],
//!     1,
//! )
//! .unwrap();
//! let stretched = DVector::from_vec(vec![0.0f64, 0.0]);
//! let bent = DVector::from_vec(vec![std::f64::consts::FRAC_PI_4, 0.0]);
//! assert_eq!(check_collision(&stretched, &ws).unwrap(), vec![-1]); // free
//! assert_eq!(check_collision(&bent, &ws).unwrap(), vec![1]); // hits the ball
//! ```

pub mod active;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod kinematics;
pub mod perceptron;
pub mod scorer;
pub mod trajopt;

pub use error::{Error, Result};

/// Flat re-exports of the types most call sites need.
pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::geometry::{
        check_collision, minimal_translation_distance, signed_distance, Capsule, Obstacle, Oracle,
        Shape, Workspace,
    };
    pub use crate::kernels::{KernelSpec, LazyKernelMatrix};
    pub use crate::kinematics::{control_points, fk_jacobian, fk_stacked, RobotGeometry};
    pub use crate::perceptron::{train, LabeledDataset, TrainOptions, TrainOutcome, WarmStart};
    pub use crate::scorer::{fit_interpolation, SupportModel, TargetMode};
    pub use crate::trajopt::{
        escape, optimize, repair, verify, GradientMode, ProblemSpec, SolveReport, Trajectory,
    };
    pub use crate::active::{step as active_step, ActiveConfig, TimestepUpdate};
    pub use crate::harness::{
        correlate, default_robot, gen_env, gen_queries, run_benchmark, run_dynamic, solve_query,
        summarize, train_model, training_samples, BenchmarkSpec, MetricsRow, MotionScript, Query,
        TrainReport,
    };
}
