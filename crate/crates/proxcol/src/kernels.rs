//! Kernel functions over configurations, with optional forward-kinematics
//! feature maps, plus a lazily-filled kernel matrix for perceptron training.
//!
//! Two families:
//!
//! * rational-quadratic `k(a, b) = (1 + (γ/p)·‖a−b‖²)^(−p)`, bounded in
//!   `(0, 1]` with `k(a, a) = 1`;
//! * polyharmonic spline `k(a, b) = r^k` for odd degree `k` and
//!   `r^k·ln r` for even `k`, with `r = ‖a−b‖` and value 0 at `r = 0`.
//!
//! The `Fk*` variants evaluate the same functions on stacked control-point
//! coordinates instead of raw joint angles, so that two configurations
//! count as close only when the arm actually occupies nearby workspace
//! poses.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::{fk_stacked, RobotGeometry};

/// Kernel family and parameters. Serializable so models stay self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// Rational-quadratic on raw configurations.
    Rq { gamma: f64, power: f64 },
    /// Polyharmonic spline on raw configurations.
    Ph { degree: u32 },
    /// Rational-quadratic on stacked control-point coordinates.
    FkRq { gamma: f64, power: f64 },
    /// Polyharmonic spline on stacked control-point coordinates.
    FkPh { degree: u32 },
}

impl KernelSpec {
    /// Default training kernel: rational-quadratic over control points with
    /// `γ = 10 / arm_length²` and `p = 2`, so the length scale tracks the
    /// robot's size.
    pub fn default_train(robot: &RobotGeometry) -> Self {
        let arm = robot.arm_length();
        KernelSpec::FkRq { gamma: 10.0 / (arm * arm), power: 2.0 }
    }

    /// Default scoring kernel: first-degree polyharmonic over control points.
    pub fn default_score() -> Self {
        KernelSpec::FkPh { degree: 1 }
    }

    pub fn uses_fk(&self) -> bool {
        matches!(self, KernelSpec::FkRq { .. } | KernelSpec::FkPh { .. })
    }

    /// Feature map the kernel operates on: identity for raw kernels,
    /// stacked control points for FK kernels.
    pub fn feature(&self, robot: &RobotGeometry, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.uses_fk() {
            fk_stacked(robot, x)
        } else {
            Ok(x.clone())
        }
    }

    /// Kernel value on already-mapped features.
    pub fn eval_features(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let r2 = (a - b).norm_squared();
        match *self {
            KernelSpec::Rq { gamma, power } | KernelSpec::FkRq { gamma, power } => {
                (1.0 + gamma / power * r2).powf(-power)
            }
            KernelSpec::Ph { degree } | KernelSpec::FkPh { degree } => ph(r2.sqrt(), degree),
        }
    }

    /// Kernel value on configurations.
    pub fn eval(&self, robot: &RobotGeometry, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(self.eval_features(&self.feature(robot, x)?, &self.feature(robot, y)?))
    }
}

/// Polyharmonic radial profile with the removable singularity at 0 patched.
fn ph(r: f64, degree: u32) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let rk = r.powi(degree as i32);
    if degree % 2 == 1 {
        rk
    } else {
        rk * r.ln()
    }
}

/// `d/dr` of the polyharmonic profile divided by `r`: the scalar `c(r)` such
/// that `∇_a k(a, b) = c(‖a−b‖)·(a − b)`. Returns 0 at `r = 0` (subgradient
/// choice at the kink).
pub(crate) fn ph_grad_coeff(r: f64, degree: u32) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let k = degree as f64;
    let rk2 = r.powi(degree as i32 - 2);
    if degree % 2 == 1 {
        k * rk2
    } else {
        rk2 * (k * r.ln() + 1.0)
    }
}

/// Kernel values between a query and a list of support features.
pub fn kernel_row(
    spec: &KernelSpec,
    robot: &RobotGeometry,
    x_query: &DVector<f64>,
    support_features: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let fq = spec.feature(robot, x_query)?;
    Ok(DVector::from_iterator(
        support_features.len(),
        support_features.iter().map(|f| spec.eval_features(&fq, f)),
    ))
}

/// Symmetric kernel matrix over `n` configurations whose columns are filled
/// on first touch. Entries default to "unknown"; training only ever reads a
/// column after [`LazyKernelMatrix::column`] has filled it, so untouched
/// pairs are never evaluated. Diagonal entries are precomputed eagerly —
/// they are needed before any column is (perceptron step sizes divide by
/// them) and cost one kernel evaluation each.
pub struct LazyKernelMatrix {
    features: Vec<DVector<f64>>,
    spec: KernelSpec,
    columns: Vec<Option<Box<[f64]>>>,
    diag: Vec<f64>,
}

impl LazyKernelMatrix {
    pub fn new(
        spec: KernelSpec,
        robot: &RobotGeometry,
        configs: &[DVector<f64>],
    ) -> Result<Self> {
        let features: Vec<DVector<f64>> = configs
            .iter()
            .map(|x| spec.feature(robot, x))
            .collect::<Result<_>>()?;
        let diag = features.iter().map(|f| spec.eval_features(f, f)).collect();
        Ok(Self { columns: vec![None; features.len()], features, spec, diag })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn is_computed(&self, j: usize) -> bool {
        self.columns[j].is_some()
    }

    /// Number of columns filled so far (the lazy evaluation savings metric).
    pub fn computed_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.is_some()).count()
    }

    /// Column `j`, filling it if this is the first touch.
    pub fn column(&mut self, j: usize) -> &[f64] {
        if self.columns[j].is_none() {
            let fj = &self.features[j];
            let col: Box<[f64]> = self
                .features
                .iter()
                .map(|fi| self.spec.eval_features(fi, fj))
                .collect();
            self.columns[j] = Some(col);
        }
        self.columns[j].as_deref().expect("just filled")
    }

    /// Fully materialized matrix; test/debug helper, O(n²) evaluations.
    pub fn eager(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            self.spec.eval_features(&self.features[i], &self.features[j])
        })
    }
}
