//! Differentiable collision score built on top of a trained perceptron.
//!
//! The perceptron's support configurations are re-fit with a polyharmonic
//! kernel: solve `K_PH · A = targets` (labels, or measured signed distances)
//! in a regularized least-squares sense, where `K_PH` is masked to pairs of
//! supports that share weight in at least one category. The resulting score
//! `ψ_c(x) = Σ_j k(x, s_j) · A_jc` is smooth almost everywhere and its
//! gradient chains through the forward-kinematics Jacobian, which is what
//! makes trajectory optimization cheap. Query-time kernel rows are *not*
//! masked — the mask only shapes the fit.
//!
//! Positive score means predicted collision; a per-category safety bias `ε`
//! shifts the decision surface outward, and raising one category's bias
//! buys it extra clearance relative to the others.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{ph_grad_coeff, KernelSpec};
use crate::kinematics::{fk_jacobian, RobotGeometry};
use crate::perceptron::SupportSet;

pub const MODEL_VERSION: &str = "proxcol-model-v1";

/// What the interpolation coefficients were fit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// `±1` collision labels; the score is a smoothed classifier.
    Labels,
    /// Ground-truth signed distances; the score approximates a metric.
    Distances,
}

/// Result of the regularized interpolation solve.
#[derive(Debug, Clone)]
pub struct InterpolationFit {
    /// `m × categories` coefficients.
    pub coefficients: DMatrix<f64>,
    /// Per-category residual `‖K·a − t‖₂` of the masked system.
    pub residuals: DVector<f64>,
    /// Set when any residual exceeds `1e-3 · ‖targets‖`; the model is still
    /// usable but interpolation exactness is not guaranteed.
    pub ill_conditioned: bool,
}

/// Polyharmonic Gram matrix over the support set, masked to co-active pairs:
/// entry `(i, j)` is nonzero only if some category holds weight on both `i`
/// and `j`. Symmetric with a zero diagonal (the kernel vanishes at radius 0).
pub fn masked_ph_matrix(
    support: &SupportSet,
    kernel: &KernelSpec,
    robot: &RobotGeometry,
) -> Result<DMatrix<f64>> {
    let m = support.len();
    let cats = support.weights.ncols();
    let feats: Vec<DVector<f64>> = support
        .configs
        .iter()
        .map(|s| kernel.feature(robot, s))
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let coactive = (0..cats)
                .any(|c| support.weights[(i, c)] != 0.0 && support.weights[(j, c)] != 0.0);
            if coactive {
                let v = kernel.eval_features(&feats[i], &feats[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    }
    Ok(k)
}

/// Solve `K · A = targets` by Tikhonov-regularized least squares with
/// `λ = 1e-8 · trace(KᵀK)/m`. Singular systems get escalating regularization
/// and are flagged rather than rejected.
pub fn fit_interpolation(
    support: &SupportSet,
    targets: &DMatrix<f64>,
    kernel: &KernelSpec,
    robot: &RobotGeometry,
) -> Result<InterpolationFit> {
    let m = support.len();
    if m < 2 {
        return Err(Error::DegenerateModel(format!(
            "{m} support configuration(s); need at least 2 to interpolate"
        )));
    }
    if targets.nrows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: targets.nrows() });
    }
    let k = masked_ph_matrix(support, kernel, robot)?;
    let ktk = k.transpose() * &k;
    let rhs = k.transpose() * targets;
    let base_lambda = 1e-8 * ktk.trace() / m as f64;
    let mut lambda = base_lambda;
    let mut forced = false;
    let coefficients = loop {
        let mut reg = ktk.clone();
        for d in 0..m {
            reg[(d, d)] += lambda;
        }
        if let Some(chol) = reg.cholesky() {
            break chol.solve(&rhs);
        }
        // singular even after regularization: escalate and remember
        forced = true;
        lambda = if lambda > 0.0 { lambda * 100.0 } else { 1e-12 };
        if lambda > 1e6 {
            // fully degenerate (e.g. all-zero masked matrix): zero model
            break DMatrix::zeros(m, targets.ncols());
        }
    };
    let misfit = &k * &coefficients - targets;
    let residuals =
        DVector::from_iterator(targets.ncols(), misfit.column_iter().map(|c| c.norm()));
    let ill_conditioned = forced
        || (0..targets.ncols()).any(|c| {
            residuals[c] > 1e-3 * targets.column(c).norm().max(1e-12)
        });
    Ok(InterpolationFit { coefficients, residuals, ill_conditioned })
}

/// Uniform default safety bias. Scores trained on ±1 labels swing through
/// roughly two units across the collision boundary, so 0.2 buys a real
/// margin without inflating obstacles until narrow passages pinch shut.
pub fn default_bias(categories: usize) -> DVector<f64> {
    DVector::from_element(categories, 0.2)
}

/// A complete proxy collision detector: support set, perceptron weights,
/// interpolation coefficients, kernels, bias, and the robot they belong to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct SupportModel {
    pub robot: RobotGeometry,
    pub train_kernel: KernelSpec,
    pub score_kernel: KernelSpec,
    pub support: Vec<DVector<f64>>,
    /// `m × categories` ±1 labels of the supports.
    pub labels: DMatrix<f64>,
    /// `m × categories` perceptron weights (the mask pattern).
    pub weights: DMatrix<f64>,
    /// What the interpolation was fit to (labels or distances).
    pub targets: DMatrix<f64>,
    pub target_mode: TargetMode,
    /// `m × categories` interpolation coefficients.
    pub coefficients: DMatrix<f64>,
    /// Per-category safety bias ε added by [`SupportModel::biased`].
    pub bias: DVector<f64>,
    pub fit_residuals: DVector<f64>,
    pub ill_conditioned: bool,
    /// Whether perceptron training fully separated the data.
    pub separated: bool,
    #[serde(skip)]
    features: Vec<DVector<f64>>,
}

#[derive(Deserialize)]
struct RawModel {
    robot: RobotGeometry,
    train_kernel: KernelSpec,
    score_kernel: KernelSpec,
    support: Vec<DVector<f64>>,
    labels: DMatrix<f64>,
    weights: DMatrix<f64>,
    targets: DMatrix<f64>,
    target_mode: TargetMode,
    coefficients: DMatrix<f64>,
    bias: DVector<f64>,
    fit_residuals: DVector<f64>,
    ill_conditioned: bool,
    separated: bool,
}

impl TryFrom<RawModel> for SupportModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let features = raw
            .support
            .iter()
            .map(|s| raw.score_kernel.feature(&raw.robot, s))
            .collect::<Result<_>>()?;
        Ok(SupportModel {
            robot: raw.robot,
            train_kernel: raw.train_kernel,
            score_kernel: raw.score_kernel,
            support: raw.support,
            labels: raw.labels,
            weights: raw.weights,
            targets: raw.targets,
            target_mode: raw.target_mode,
            coefficients: raw.coefficients,
            bias: raw.bias,
            fit_residuals: raw.fit_residuals,
            ill_conditioned: raw.ill_conditioned,
            separated: raw.separated,
            features,
        })
    }
}

impl SupportModel {
    /// Fit a model from a trained support set.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        robot: RobotGeometry,
        train_kernel: KernelSpec,
        score_kernel: KernelSpec,
        support: &SupportSet,
        targets: DMatrix<f64>,
        target_mode: TargetMode,
        bias: DVector<f64>,
        separated: bool,
    ) -> Result<Self> {
        if bias.len() != support.num_categories() {
            return Err(Error::DimensionMismatch {
                expected: support.num_categories(),
                got: bias.len(),
            });
        }
        let fit = fit_interpolation(support, &targets, &score_kernel, &robot)?;
        let features = support
            .configs
            .iter()
            .map(|s| score_kernel.feature(&robot, s))
            .collect::<Result<_>>()?;
        Ok(Self {
            robot,
            train_kernel,
            score_kernel,
            support: support.configs.clone(),
            labels: support.labels.clone(),
            weights: support.weights.clone(),
            targets,
            target_mode,
            coefficients: fit.coefficients,
            bias,
            fit_residuals: fit.residuals,
            ill_conditioned: fit.ill_conditioned,
            separated,
            features,
        })
    }

    pub fn num_supports(&self) -> usize {
        self.support.len()
    }

    pub fn num_categories(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn dof(&self) -> usize {
        self.robot.dof
    }

    /// Per-category score `ψ(x)`; positive predicts collision.
    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let fx = self.score_kernel.feature(&self.robot, x)?;
        let cats = self.num_categories();
        let mut psi = DVector::zeros(cats);
        for (j, fj) in self.features.iter().enumerate() {
            let k = self.score_kernel.eval_features(&fx, fj);
            for c in 0..cats {
                psi[c] += self.coefficients[(j, c)] * k;
            }
        }
        Ok(psi)
    }

    /// Score plus its `categories × dof` Jacobian in one pass (shares the
    /// forward-kinematics work). The gradient chains `∂k/∂feature` through
    /// the FK Jacobian; at an exact support coincidence the polyharmonic
    /// kink contributes its zero subgradient.
    pub fn score_with_gradient(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let degree = match self.score_kernel {
            KernelSpec::Ph { degree } | KernelSpec::FkPh { degree } => degree,
            _ => {
                return Err(Error::InvalidInput(
                    "analytic score gradients require a polyharmonic kernel".into(),
                ))
            }
        };
        let fx = self.score_kernel.feature(&self.robot, x)?;
        let cats = self.num_categories();
        let mut psi = DVector::zeros(cats);
        // gradient accumulators in feature space
        let mut gfeat = DMatrix::zeros(fx.len(), cats);
        for (j, fj) in self.features.iter().enumerate() {
            let diff = &fx - fj;
            let r = diff.norm();
            let k = self.score_kernel.eval_features(&fx, fj);
            let coeff = ph_grad_coeff(r, degree);
            for c in 0..cats {
                let a = self.coefficients[(j, c)];
                psi[c] += a * k;
                if a != 0.0 && coeff != 0.0 {
                    for d in 0..fx.len() {
                        gfeat[(d, c)] += a * coeff * diff[d];
                    }
                }
            }
        }
        let grad = if self.score_kernel.uses_fk() {
            let jac = fk_jacobian(&self.robot, x)?; // feature-dim × dof
            (jac.transpose() * gfeat).transpose()
        } else {
            gfeat.transpose()
        };
        Ok((psi, grad))
    }

    pub fn score_gradient(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.score_with_gradient(x)?.1)
    }

    /// Biased constraint values `ψ(x) + ε`; feasible configurations are the
    /// ones where every entry is ≤ 0.
    pub fn biased(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.score(x)? + &self.bias)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = ModelFile { version: MODEL_VERSION.to_string(), model: self.clone() };
        Ok(std::fs::write(path, serde_json::to_string(&file)?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                found: file.version,
                expected: MODEL_VERSION.to_string(),
            });
        }
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    model: SupportModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn arm2() -> RobotGeometry {
        RobotGeometry::new(vec![1.0, 1.0], 0.1, [0.0, 0.0], vec![None, None]).unwrap()
    }

    fn cfg(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn xorshift(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        *state as f64 / u64::MAX as f64
    }

    /// Random single-category support set (full co-activity mask).
    fn random_support(robot: &RobotGeometry, m: usize, seed: u64) -> SupportSet {
        let mut state = seed.max(1);
        let configs: Vec<DVector<f64>> = (0..m)
            .map(|_| {
                DVector::from_fn(robot.dof, |_, _| xorshift(&mut state) * 2.0 * PI - PI)
            })
            .collect();
        let labels = DMatrix::from_fn(m, 1, |r, _| if r % 2 == 0 { 1.0 } else { -1.0 });
        let weights = DMatrix::from_fn(m, 1, |r, _| {
            let w = xorshift(&mut state) * 2.0 - 1.0;
            let w = if w == 0.0 { 0.5 } else { w };
            w * labels[(r, 0)]
        });
        SupportSet { configs, labels, weights }
    }

    fn fit_default(support: &SupportSet, robot: &RobotGeometry) -> SupportModel {
        SupportModel::fit(
            robot.clone(),
            KernelSpec::default_train(robot),
            KernelSpec::default_score(),
            support,
            support.labels.clone(),
            TargetMode::Labels,
            default_bias(support.num_categories()),
            true,
        )
        .unwrap()
    }

    #[test]
    fn two_point_interpolation_has_closed_form() {
        // K = [[0, d], [d, 0]], targets (+1, -1) → A = (-1/d, +1/d)
        let robot = arm2();
        let support = SupportSet {
            configs: vec![cfg(&[0.0, 0.0]), cfg(&[1.0, 0.5])],
            labels: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            weights: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        };
        let kernel = KernelSpec::default_score();
        let d = kernel.eval(&robot, &support.configs[0], &support.configs[1]).unwrap();
        let fit = fit_interpolation(&support, &support.labels, &kernel, &robot).unwrap();
        assert_abs_diff_eq!(fit.coefficients[(0, 0)], -1.0 / d, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.coefficients[(1, 0)], 1.0 / d, epsilon = 1e-6);
        assert!(!fit.ill_conditioned);
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let robot = arm2();
        let support = random_support(&robot, 8, 11);
        let fit = fit_interpolation(
            &support,
            &DMatrix::zeros(8, 1),
            &KernelSpec::default_score(),
            &robot,
        )
        .unwrap();
        assert!(fit.coefficients.iter().all(|&a| a.abs() < 1e-12));
    }

    #[test]
    fn single_support_is_degenerate() {
        let robot = arm2();
        let support = SupportSet {
            configs: vec![cfg(&[0.0, 0.0])],
            labels: DMatrix::from_element(1, 1, 1.0),
            weights: DMatrix::from_element(1, 1, 1.0),
        };
        assert!(matches!(
            fit_interpolation(&support, &support.labels.clone(), &KernelSpec::default_score(), &robot),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn interpolation_reproduces_targets_at_supports() {
        let robot = arm2();
        for seed in 1..=10u64 {
            let support = random_support(&robot, 20, seed * 7919);
            let model = fit_default(&support, &robot);
            assert!(!model.ill_conditioned, "seed {seed} unexpectedly ill-conditioned");
            for (i, s) in support.configs.iter().enumerate() {
                let psi = model.score(s).unwrap();
                assert_abs_diff_eq!(psi[0], support.labels[(i, 0)], epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn masked_matrix_is_symmetric_with_zero_diagonal() {
        let robot = arm2();
        let mut support = random_support(&robot, 12, 5);
        // two categories with disjoint activity to exercise the mask
        let m = support.len();
        let mut w = DMatrix::zeros(m, 2);
        for i in 0..m {
            w[(i, i % 2)] = 1.0;
        }
        support.weights = w;
        support.labels = DMatrix::from_element(m, 2, 1.0);
        let k = masked_ph_matrix(&support, &KernelSpec::default_score(), &robot).unwrap();
        for i in 0..m {
            assert_eq!(k[(i, i)], 0.0);
            for j in 0..m {
                assert_eq!(k[(i, j)], k[(j, i)]);
                if (i + j) % 2 == 1 {
                    assert_eq!(k[(i, j)], 0.0, "cross-category pair must be masked");
                }
            }
        }
    }

    #[test]
    fn masked_fit_solves_the_masked_system() {
        let robot = arm2();
        let mut support = random_support(&robot, 16, 3);
        let m = support.len();
        let mut w = DMatrix::zeros(m, 2);
        for i in 0..m {
            w[(i, i % 2)] = if i % 4 < 2 { 0.7 } else { -0.9 };
        }
        support.weights = w;
        support.labels = DMatrix::from_fn(m, 2, |r, _| if r % 4 < 2 { 1.0 } else { -1.0 });
        let kernel = KernelSpec::default_score();
        let targets = support.labels.clone();
        let k = masked_ph_matrix(&support, &kernel, &robot).unwrap();
        let fit = fit_interpolation(&support, &targets, &kernel, &robot).unwrap();
        let err = (&k * &fit.coefficients - &targets).norm();
        assert!(err < 1e-3 * targets.norm() + 1e-9, "masked system residual {err}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let robot = arm2();
        let support = random_support(&robot, 25, 77);
        let model = fit_default(&support, &robot);
        let h = 1e-6;
        let mut state = 4141u64;
        for _ in 0..100 {
            let x = cfg(&[
                xorshift(&mut state) * 2.0 * PI - PI,
                xorshift(&mut state) * 2.0 * PI - PI,
            ]);
            let (_, grad) = model.score_with_gradient(&x).unwrap();
            for d in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[d] += h;
                xm[d] -= h;
                let fp = model.score(&xp).unwrap();
                let fm = model.score(&xm).unwrap();
                let fd = (fp[0] - fm[0]) / (2.0 * h);
                assert_abs_diff_eq!(grad[(0, d)], fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn gradient_at_support_coincidence_is_finite() {
        let robot = arm2();
        let support = random_support(&robot, 10, 13);
        let model = fit_default(&support, &robot);
        let (psi, grad) = model.score_with_gradient(&support.configs[0]).unwrap();
        assert!(psi[0].is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn biased_adds_epsilon_per_category() {
        let robot = arm2();
        let support = random_support(&robot, 10, 29);
        let mut model = fit_default(&support, &robot);
        model.bias = DVector::from_element(1, 0.25);
        let x = cfg(&[0.4, -0.4]);
        let raw = model.score(&x).unwrap();
        let biased = model.biased(&x).unwrap();
        assert_abs_diff_eq!(biased[0], raw[0] + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn higher_bias_shrinks_the_feasible_set() {
        // identical obstacles mirrored across the x-axis, one category each;
        // the high-bias category must have a smaller biased-feasible area
        use crate::geometry::{check_collision, Obstacle, Workspace};
        use crate::perceptron::{train, LabeledDataset, TrainOptions};
        let robot = arm2();
        let ws = Workspace::new(
            robot.clone(),
            vec![
                Obstacle::circle("high", [1.2, 0.9], 0.35, 0),
                Obstacle::circle("low", [1.2, -0.9], 0.35, 1),
            ],
            2,
        )
        .unwrap();
        let mut state = 22u64;
        let n = 1500;
        let configs: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ])
            })
            .collect();
        let labels = DMatrix::from_fn(n, 2, |r, c| {
            check_collision(&configs[r], &ws).unwrap()[c] as f64
        });
        let data = LabeledDataset::new(configs, labels).unwrap();
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions::default(),
        )
        .unwrap();
        let model = SupportModel::fit(
            robot.clone(),
            KernelSpec::default_train(&robot),
            KernelSpec::default_score(),
            &out.support,
            out.support.labels.clone(),
            TargetMode::Labels,
            DVector::from_column_slice(&[1.0, 0.1]),
            out.separated,
        )
        .unwrap();
        let mut feasible = [0usize; 2];
        for i in 0..60 {
            for j in 0..60 {
                let x = cfg(&[
                    -PI + 2.0 * PI * i as f64 / 59.0,
                    -PI + 2.0 * PI * j as f64 / 59.0,
                ]);
                let b = model.biased(&x).unwrap();
                for c in 0..2 {
                    if b[c] <= 0.0 {
                        feasible[c] += 1;
                    }
                }
            }
        }
        assert!(
            feasible[0] < feasible[1],
            "high-bias feasible cells {} must be fewer than low-bias {}",
            feasible[0],
            feasible[1]
        );
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let robot = arm2();
        let support = random_support(&robot, 15, 101);
        let model = fit_default(&support, &robot);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = SupportModel::load(&path).unwrap();
        assert_eq!(model.coefficients, loaded.coefficients);
        assert_eq!(model.weights, loaded.weights);
        assert_eq!(model.bias, loaded.bias);
        for (a, b) in model.support.iter().zip(loaded.support.iter()) {
            assert_eq!(a, b);
        }
        // identical scores on random probes
        let mut state = 88u64;
        for _ in 0..20 {
            let x = cfg(&[
                xorshift(&mut state) * 2.0 * PI - PI,
                xorshift(&mut state) * 2.0 * PI - PI,
            ]);
            assert_eq!(model.score(&x).unwrap(), loaded.score(&x).unwrap());
        }
    }

    #[test]
    fn unknown_model_version_is_rejected() {
        let robot = arm2();
        let support = random_support(&robot, 5, 7);
        let model = fit_default(&support, &robot);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut file = serde_json::to_value(ModelFile {
            version: MODEL_VERSION.to_string(),
            model,
        })
        .unwrap();
        file["version"] = serde_json::Value::String("proxcol-model-v999".into());
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(SupportModel::load(&path), Err(Error::ModelVersion { .. })));
    }
}
