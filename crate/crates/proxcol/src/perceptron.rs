//! Sparse multi-label kernel perceptron.
//!
//! Training touches one category per pass: find the worst margin; if it is
//! non-positive, add a corrective weight on that row (which snaps its margin
//! to exactly +1); otherwise try to zero one redundant weight whose removal
//! keeps every margin positive; if neither applies the category is done.
//! The hypothesis vector `H = K·W` is maintained incrementally, so only the
//! kernel columns of rows that ever receive weight are computed — the lazy
//! kernel matrix is what keeps training tractable.
//!
//! Rows that end with any nonzero weight are the support configurations;
//! everything else is dropped from the returned model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, LazyKernelMatrix};
use crate::kinematics::RobotGeometry;

/// Training data: configurations with `±1` labels per category. Exact
/// duplicate configurations are dropped at ingestion (the first occurrence
/// wins) — duplicates add nothing and break interpolation later on.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub configs: Vec<DVector<f64>>,
    /// `n × categories`, entries exactly `+1.0` or `-1.0`.
    pub labels: DMatrix<f64>,
}

impl LabeledDataset {
    pub fn new(configs: Vec<DVector<f64>>, labels: DMatrix<f64>) -> Result<Self> {
        use std::collections::HashSet;
        if configs.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if labels.nrows() != configs.len() {
            return Err(Error::DimensionMismatch {
                expected: configs.len(),
                got: labels.nrows(),
            });
        }
        if labels.ncols() == 0 {
            return Err(Error::InvalidInput("dataset needs at least one category".into()));
        }
        if labels.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidInput("labels must be exactly +1 or -1".into()));
        }
        let dim = configs[0].len();
        if configs.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidInput("configurations have mixed dimensions".into()));
        }
        // drop bit-exact duplicate rows, keeping first occurrences in order
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(configs.len());
        let mut kept_rows = Vec::with_capacity(configs.len());
        let mut kept_configs = Vec::with_capacity(configs.len());
        for (i, c) in configs.iter().enumerate() {
            let key: Vec<u64> = c.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                kept_rows.push(i);
                kept_configs.push(c.clone());
            }
        }
        let kept_labels = DMatrix::from_fn(kept_rows.len(), labels.ncols(), |r, c| {
            labels[(kept_rows[r], c)]
        });
        Ok(Self { configs: kept_configs, labels: kept_labels })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn num_categories(&self) -> usize {
        self.labels.ncols()
    }
}

/// Weights and hypothesis for the first rows of a dataset, carried over from
/// a previous model. New rows start at zero weight and zero hypothesis.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub weights: DMatrix<f64>,
    pub hypothesis: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Outer iteration cap; defaults to `10 × n` when `None`.
    pub max_iterations: Option<usize>,
    /// Record every update for test instrumentation.
    pub keep_log: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_iterations: None, keep_log: false }
    }
}

/// One training action, for audits and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateEvent {
    /// Corrective step on `(row, category)`; `margin_after` is the row's own
    /// margin immediately after the step.
    Adjust { row: usize, category: usize, delta: f64, margin_after: f64 },
    /// A redundant weight removed from `(row, category)`.
    Zero { row: usize, category: usize },
}

/// Support rows extracted from a trained perceptron.
#[derive(Debug, Clone)]
pub struct SupportSet {
    pub configs: Vec<DVector<f64>>,
    /// `m × categories` labels of the support rows.
    pub labels: DMatrix<f64>,
    /// `m × categories` perceptron weights of the support rows.
    pub weights: DMatrix<f64>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn num_categories(&self) -> usize {
        self.labels.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub support: SupportSet,
    /// Full-dataset weights at exit.
    pub weights: DMatrix<f64>,
    /// Full-dataset hypothesis at exit.
    pub hypothesis: DMatrix<f64>,
    /// Whether every category reached a separating state before the cap.
    pub separated: bool,
    /// Outer iterations consumed.
    pub iterations: usize,
    /// Kernel columns that were actually evaluated.
    pub kernel_columns: usize,
    pub log: Vec<UpdateEvent>,
}

/// Margins `Y ⊙ H`: positive where the hypothesis agrees with the label.
pub fn margins(labels: &DMatrix<f64>, hypothesis: &DMatrix<f64>) -> DMatrix<f64> {
    labels.component_mul(hypothesis)
}

/// Train on labeled configurations, optionally warm-started. The warm rows
/// must be the first `warm.weights.nrows()` rows of `data`.
pub fn train(
    data: &LabeledDataset,
    kernel: &KernelSpec,
    robot: &RobotGeometry,
    warm: Option<&WarmStart>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let n = data.len();
    let cats = data.num_categories();
    let mut kmat = LazyKernelMatrix::new(kernel.clone(), robot, &data.configs)?;
    let mut w = DMatrix::zeros(n, cats);
    let mut h = DMatrix::zeros(n, cats);
    if let Some(warm) = warm {
        let m0 = warm.weights.nrows();
        if m0 > n || warm.hypothesis.nrows() != m0 {
            return Err(Error::DimensionMismatch { expected: n, got: m0 });
        }
        if warm.weights.ncols() != cats || warm.hypothesis.ncols() != cats {
            return Err(Error::DimensionMismatch { expected: cats, got: warm.weights.ncols() });
        }
        w.rows_mut(0, m0).copy_from(&warm.weights);
        h.rows_mut(0, m0).copy_from(&warm.hypothesis);
        // Complete the zero-padded hypothesis of the new rows with the warm
        // weights' contributions. Without this, H ≠ K·W on the new rows and
        // the redundancy-removal branch below reasons from understated
        // margins — it can then delete a weight the model actually needs.
        for j in 0..m0 {
            let active = (0..cats).any(|c| warm.weights[(j, c)] != 0.0);
            if !active {
                continue;
            }
            let col = kmat.column(j).to_vec();
            for r in m0..n {
                for c in 0..cats {
                    let wj = warm.weights[(j, c)];
                    if wj != 0.0 {
                        h[(r, c)] += wj * col[r];
                    }
                }
            }
        }
    }

    let max_iterations = opts.max_iterations.unwrap_or(10 * n);
    let mut completed = vec![false; cats];
    let mut log = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iterations {
        iterations += 1;
        for c in 0..cats {
            if completed[c] {
                continue;
            }
            // worst margin in this category (ties break to the lowest row)
            let mut worst_row = 0;
            let mut worst_margin = f64::INFINITY;
            for i in 0..n {
                let m = data.labels[(i, c)] * h[(i, c)];
                if m < worst_margin {
                    worst_margin = m;
                    worst_row = i;
                }
            }
            if worst_margin <= 0.0 {
                // corrective step: snap this row's hypothesis to its label
                let i = worst_row;
                let kii = kmat.diag(i);
                if kii == 0.0 {
                    return Err(Error::KernelDiagonalZero { index: i });
                }
                let delta = (data.labels[(i, c)] - h[(i, c)]) / kii;
                w[(i, c)] += delta;
                let col = kmat.column(i);
                for r in 0..n {
                    h[(r, c)] += delta * col[r];
                }
                if opts.keep_log {
                    log.push(UpdateEvent::Adjust {
                        row: i,
                        category: c,
                        delta,
                        margin_after: data.labels[(i, c)] * h[(i, c)],
                    });
                }
                continue;
            }
            // all margins positive: drop the most redundant weight if its
            // removal keeps this row's margin positive
            let mut best_row = None;
            let mut best_margin = f64::NEG_INFINITY;
            for i in 0..n {
                if w[(i, c)] != 0.0 {
                    let m = data.labels[(i, c)] * (h[(i, c)] - w[(i, c)] * kmat.diag(i));
                    if m > best_margin {
                        best_margin = m;
                        best_row = Some(i);
                    }
                }
            }
            match best_row {
                Some(i) if best_margin > 0.0 => {
                    let wi = w[(i, c)];
                    let col = kmat.column(i);
                    for r in 0..n {
                        h[(r, c)] -= wi * col[r];
                    }
                    w[(i, c)] = 0.0;
                    if opts.keep_log {
                        log.push(UpdateEvent::Zero { row: i, category: c });
                    }
                }
                _ => completed[c] = true,
            }
        }
        if completed.iter().all(|&done| done) {
            break;
        }
    }

    let separated = completed.iter().all(|&done| done);
    let support_rows: Vec<usize> =
        (0..n).filter(|&i| (0..cats).any(|c| w[(i, c)] != 0.0)).collect();
    let support = SupportSet {
        configs: support_rows.iter().map(|&i| data.configs[i].clone()).collect(),
        labels: DMatrix::from_fn(support_rows.len(), cats, |r, c| {
            data.labels[(support_rows[r], c)]
        }),
        weights: DMatrix::from_fn(support_rows.len(), cats, |r, c| w[(support_rows[r], c)]),
    };
    Ok(TrainOutcome {
        support,
        weights: w,
        hypothesis: h,
        separated,
        iterations,
        kernel_columns: kmat.computed_columns(),
        log,
    })
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

    fn dataset(rows: &[(&[f64], &[f64])]) -> LabeledDataset {
        let configs: Vec<_> = rows.iter().map(|(c, _)| cfg(c)).collect();
        let cats = rows[0].1.len();
        let labels =
            DMatrix::from_fn(rows.len(), cats, |r, c| rows[r].1[c]);
        LabeledDataset::new(configs, labels).unwrap()
    }

    fn xorshift(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        *state as f64 / u64::MAX as f64
    }

    /// 2-DOF toy scene: collides iff the first control point is in the upper
    /// half plane. Cleanly separable in FK feature space.
    fn toy_labels(x: &DVector<f64>) -> f64 {
        if x[0].sin() >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    #[test]
    fn single_point_gets_weight_equal_to_label() {
        // one row, one category: first pass corrects margin 0 → w = y/K_ii = y
        let data = dataset(&[(&[0.3, 0.4], &[1.0])]);
        let robot = arm2();
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions::default(),
        )
        .unwrap();
        assert!(out.separated);
        assert_eq!(out.support.len(), 1);
        assert_abs_diff_eq!(out.support.weights[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.hypothesis[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_negative_labels_collapse_to_one_support() {
        // three configs, all free: one corrective step fixes every margin
        // (kernel values positive), then zeroing removes nothing more than
        // redundancy. Hand-traced outcome: a single support with w = -1.
        let robot = arm2();
        let data = dataset(&[
            (&[0.0, 0.0], &[-1.0]),
            (&[0.1, 0.0], &[-1.0]),
            (&[0.2, 0.1], &[-1.0]),
        ]);
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions { keep_log: true, ..Default::default() },
        )
        .unwrap();
        assert!(out.separated);
        assert_eq!(out.support.len(), 1);
        assert_abs_diff_eq!(out.support.weights[(0, 0)], -1.0, epsilon = 1e-12);
        // margins all strictly positive at exit
        let m = margins(&data.labels, &out.hypothesis);
        assert!(m.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn corrective_step_snaps_margin_to_one() {
        let robot = arm2();
        let mut state = 7u64;
        let rows: Vec<(DVector<f64>, f64)> = (0..60)
            .map(|_| {
                let x = cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ]);
                let y = toy_labels(&x);
                (x, y)
            })
            .collect();
        let labels = DMatrix::from_fn(rows.len(), 1, |r, _| rows[r].1);
        let data =
            LabeledDataset::new(rows.into_iter().map(|(x, _)| x).collect(), labels)
                .unwrap();
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions { keep_log: true, ..Default::default() },
        )
        .unwrap();
        for ev in &out.log {
            if let UpdateEvent::Adjust { margin_after, .. } = ev {
                assert_abs_diff_eq!(*margin_after, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn hypothesis_matches_eager_kernel_product() {
        let robot = arm2();
        let mut state = 99u64;
        let rows: Vec<DVector<f64>> = (0..80)
            .map(|_| {
                cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ])
            })
            .collect();
        let labels = DMatrix::from_fn(rows.len(), 1, |r, _| toy_labels(&rows[r]));
        let data = LabeledDataset::new(rows, labels).unwrap();
        let kernel = KernelSpec::default_train(&robot);
        let out = train(&data, &kernel, &robot, None, &TrainOptions::default()).unwrap();
        let eager = LazyKernelMatrix::new(kernel, &robot, &data.configs).unwrap().eager();
        let recomputed = eager * &out.weights;
        for i in 0..data.len() {
            assert_abs_diff_eq!(recomputed[(i, 0)], out.hypothesis[(i, 0)], epsilon = 1e-9);
        }
    }

    #[test]
    fn separable_scene_separates_with_sparse_support() {
        let robot = arm2();
        let mut state = 1234u64;
        let n = 1000;
        let rows: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ])
            })
            .collect();
        let labels = DMatrix::from_fn(n, 1, |r, _| toy_labels(&rows[r]));
        let data = LabeledDataset::new(rows, labels).unwrap();
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions::default(),
        )
        .unwrap();
        assert!(out.separated);
        let m = margins(&data.labels, &out.hypothesis);
        assert!(m.iter().all(|&v| v > 0.0), "all training margins must be positive");
        let fraction = out.support.len() as f64 / data.len() as f64;
        assert!(fraction < 0.1, "support fraction {fraction} too large");
        // lazy evaluation actually paid off
        assert!(out.kernel_columns < data.len());
    }

    #[test]
    fn zeroing_events_never_leave_negative_margins() {
        // Warm-start with inflated weights on two near-duplicate rows: either
        // one alone keeps every margin positive, so training must zero one of
        // them — and doing so must not break separation.
        let robot = arm2();
        let kernel = KernelSpec::default_train(&robot);
        let a = cfg(&[0.3, 0.4]);
        let b = cfg(&[0.301, 0.401]);
        let d = cfg(&[0.3 + 3.0, 0.4]);
        let k_ab = kernel.eval(&robot, &a, &b).unwrap();
        let data = LabeledDataset::new(
            vec![a, b, d],
            DMatrix::from_column_slice(3, 1, &[1.0, 1.0, -1.0]),
        )
        .unwrap();
        let warm = WarmStart {
            weights: DMatrix::from_column_slice(2, 1, &[5.0, 5.0]),
            // exact hypothesis of the warm rows under their own weights
            hypothesis: DMatrix::from_column_slice(
                2,
                1,
                &[5.0 + 5.0 * k_ab, 5.0 * k_ab + 5.0],
            ),
        };
        let out = train(
            &data,
            &kernel,
            &robot,
            Some(&warm),
            &TrainOptions { keep_log: true, ..Default::default() },
        )
        .unwrap();
        let zeroed: Vec<usize> = out
            .log
            .iter()
            .filter_map(|e| match e {
                UpdateEvent::Zero { row, .. } => Some(*row),
                _ => None,
            })
            .collect();
        assert!(!zeroed.is_empty(), "a redundant warm weight must be zeroed");
        assert!(zeroed.iter().all(|&r| r < 2), "only the duplicate rows are redundant");
        assert!(out.separated);
        // final margins positive even though weights were removed
        let m = margins(&data.labels, &out.hypothesis);
        assert!(m.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn warm_start_on_unchanged_data_is_a_no_op_for_predictions() {
        let robot = arm2();
        let kernel = KernelSpec::default_train(&robot);
        let mut state = 5150u64;
        let n = 300;
        let rows: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ])
            })
            .collect();
        let labels = DMatrix::from_fn(n, 1, |r, _| toy_labels(&rows[r]));
        let data = LabeledDataset::new(rows, labels).unwrap();
        let cold = train(&data, &kernel, &robot, None, &TrainOptions::default()).unwrap();
        let warm = WarmStart {
            weights: cold.weights.clone(),
            hypothesis: cold.hypothesis.clone(),
        };
        let rerun =
            train(&data, &kernel, &robot, Some(&warm), &TrainOptions::default()).unwrap();
        assert!(rerun.separated);
        assert_eq!(rerun.support.len(), cold.support.len());
        // predictions on a grid: sign of k(x, S)·W_S
        let feats: Vec<DVector<f64>> = cold
            .support
            .configs
            .iter()
            .map(|s| kernel.feature(&robot, s).unwrap())
            .collect();
        let feats2: Vec<DVector<f64>> = rerun
            .support
            .configs
            .iter()
            .map(|s| kernel.feature(&robot, s).unwrap())
            .collect();
        for i in 0..20 {
            for j in 0..20 {
                let x = cfg(&[
                    -PI + 2.0 * PI * i as f64 / 19.0,
                    -PI + 2.0 * PI * j as f64 / 19.0,
                ]);
                let fx = kernel.feature(&robot, &x).unwrap();
                let score = |fs: &[DVector<f64>], w: &DMatrix<f64>| -> f64 {
                    fs.iter()
                        .enumerate()
                        .map(|(k, f)| kernel.eval_features(&fx, f) * w[(k, 0)])
                        .sum()
                };
                let a = score(&feats, &cold.support.weights);
                let b = score(&feats2, &rerun.support.weights);
                assert_eq!(a > 0.0, b > 0.0, "prediction flip at grid point ({i},{j})");
            }
        }
    }

    #[test]
    fn duplicate_rows_are_dropped_at_ingestion() {
        let data = dataset(&[
            (&[0.1, 0.2], &[1.0]),
            (&[0.1, 0.2], &[1.0]),
            (&[0.5, -0.5], &[-1.0]),
        ]);
        assert_eq!(data.len(), 2);
    }

    #[test]
    fn conflicting_or_malformed_labels_are_rejected() {
        let configs = vec![cfg(&[0.0, 0.0])];
        let labels = DMatrix::from_element(1, 1, 0.5);
        assert!(LabeledDataset::new(configs, labels).is_err());
    }

    #[test]
    fn iteration_cap_flags_non_separated() {
        // cap of 1 outer iteration cannot separate a nontrivial scene
        let robot = arm2();
        let mut state = 4242u64;
        let rows: Vec<DVector<f64>> = (0..50)
            .map(|_| {
                cfg(&[
                    xorshift(&mut state) * 2.0 * PI - PI,
                    xorshift(&mut state) * 2.0 * PI - PI,
                ])
            })
            .collect();
        let labels = DMatrix::from_fn(rows.len(), 1, |r, _| toy_labels(&rows[r]));
        let data = LabeledDataset::new(rows, labels).unwrap();
        let out = train(
            &data,
            &KernelSpec::default_train(&robot),
            &robot,
            None,
            &TrainOptions { max_iterations: Some(1), keep_log: false },
        )
        .unwrap();
        assert!(!out.separated);
        assert_eq!(out.iterations, 1);
    }
}
