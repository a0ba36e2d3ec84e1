//! Active resampling that keeps a [`SupportModel`] synchronized with a
//! moving workspace.
//!
//! One [`step`] draws Gaussian samples around the current support points
//! (exploitation — obstacles move slowly, so yesterday's boundary is a good
//! prior for today's), adds uniform samples over the joint space
//! (exploration — so newly appearing obstacles are not missed), queries the
//! geometry oracle for fresh labels on old supports and new samples alike,
//! warm-starts the perceptron from the previous weights, and refits the
//! interpolation. Nothing is remembered across steps except the support set
//! and its weights: stale labels never survive.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{Oracle, Workspace};
use crate::kinematics::RobotGeometry;
use crate::perceptron::{train, LabeledDataset, TrainOptions, WarmStart};
use crate::scorer::{SupportModel, TargetMode};

/// Tuning for one resampling step.
#[derive(Debug, Clone)]
pub struct ActiveConfig {
    /// Gaussian samples drawn around each support point.
    pub nu: usize,
    /// Spread of those Gaussians (rad).
    pub sigma: f64,
    /// Uniform exploration samples per step.
    pub zeta: usize,
    /// Per-joint exploration bounds.
    pub bounds: Vec<[f64; 2]>,
}

impl ActiveConfig {
    /// ν = 5, σ = 0.1 rad, ζ = 20% of the initial training-set size,
    /// exploration over the joint boxes (unbounded joints over [−π, π)).
    pub fn defaults(robot: &RobotGeometry, initial_dataset_size: usize) -> Self {
        Self {
            nu: 5,
            sigma: 0.1,
            zeta: initial_dataset_size / 5,
            bounds: exploration_bounds(robot),
        }
    }

    fn validate(&self, dof: usize) -> Result<()> {
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        if self.nu + self.zeta == 0 {
            return Err(Error::InvalidInput(
                "need at least one sample source (nu + zeta > 0)".into(),
            ));
        }
        if self.bounds.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: self.bounds.len() });
        }
        for [lo, hi] in &self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInput("exploration bounds must be finite, lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// Exploration bounds from the joint limits; unbounded joints get [−π, π).
pub fn exploration_bounds(robot: &RobotGeometry) -> Vec<[f64; 2]> {
    robot.joint_limits.iter().map(|l| l.unwrap_or([-PI, PI])).collect()
}

/// Result of one resampling step.
#[derive(Debug)]
pub struct TimestepUpdate {
    /// Freshly drawn configurations: exploitation samples first (grouped by
    /// sweep over the supports), then exploration samples.
    pub new_samples: Vec<DVector<f64>>,
    /// Fresh labels over the previous supports followed by `new_samples`,
    /// all queried from the current workspace.
    pub labels: DMatrix<f64>,
    /// Retrained and refit model.
    pub model: SupportModel,
    /// Ground-truth queries spent: exactly `M + ν·M + ζ`.
    pub oracle_queries: u64,
    /// Whole-step wall time (sampling, labeling, retrain, refit).
    pub wall_time_s: f64,
}

/// `ν` Gaussian draws around each support point (σ = spread per joint),
/// clamped to the joint boxes where bounded. Draws sweep the support set
/// ν times so truncating the result keeps full coverage.
pub fn sample_exploitation(
    support: &[DVector<f64>],
    nu: usize,
    sigma: f64,
    limits: &[Option<[f64; 2]>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<f64>>> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidInput("sigma must be non-negative".into()));
    }
    if support.is_empty() && nu > 0 {
        return Err(Error::InvalidInput("no support points to sample around".into()));
    }
    let mut out = Vec::with_capacity(nu * support.len());
    for _ in 0..nu {
        for x in support {
            let s = DVector::from_fn(x.len(), |d, _| {
                let z: f64 = rng.sample(StandardNormal);
                let v = x[d] + sigma * z;
                match limits.get(d).copied().flatten() {
                    Some([lo, hi]) => v.clamp(lo, hi),
                    None => v,
                }
            });
            out.push(s);
        }
    }
    Ok(out)
}

/// `ζ` i.i.d. uniform samples over the given per-joint bounds.
pub fn sample_exploration(
    zeta: usize,
    bounds: &[[f64; 2]],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<f64>>> {
    if zeta > 0 && bounds.is_empty() {
        return Err(Error::InvalidInput("exploration bounds are empty".into()));
    }
    for [lo, hi] in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput("exploration bounds must be finite, lo < hi".into()));
        }
    }
    Ok((0..zeta)
        .map(|_| DVector::from_fn(bounds.len(), |d, _| rng.gen_range(bounds[d][0]..bounds[d][1])))
        .collect())
}

/// One synchronization step against the workspace as it is *now*.
///
/// Queries the oracle once per old support and once per new sample
/// (`M + ν·M + ζ` calls), retrains the perceptron warm-started from the
/// previous weights, and refits the interpolation in the model's target
/// mode. A step that fails to separate is returned flagged
/// (`model.separated == false`), not as an error, so a replanning loop can
/// keep going. A workspace so empty that fewer than two support points
/// survive cannot be refit and surfaces as [`Error::DegenerateModel`].
pub fn step(
    model: &SupportModel,
    ws: &Workspace,
    cfg: &ActiveConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TimestepUpdate> {
    let t0 = Instant::now();
    cfg.validate(model.dof())?;
    if model.robot != ws.robot {
        return Err(Error::InvalidInput("model and workspace describe different robots".into()));
    }
    if model.num_categories() != ws.num_categories {
        return Err(Error::InvalidInput("workspace category count changed".into()));
    }
    if model.num_supports() == 0 {
        return Err(Error::InvalidInput("model has no support points".into()));
    }

    let m0 = model.num_supports();
    let cats = model.num_categories();
    let robot = &model.robot;

    // sample
    let mut new_samples =
        sample_exploitation(&model.support, cfg.nu, cfg.sigma, &robot.joint_limits, rng)?;
    new_samples.extend(sample_exploration(cfg.zeta, &cfg.bounds, rng)?);

    // fresh ground truth for old supports and new samples alike
    let mut configs = Vec::with_capacity(m0 + new_samples.len());
    configs.extend(model.support.iter().cloned());
    configs.extend(new_samples.iter().cloned());
    let oracle = Oracle::new(ws);
    // deep free space has no finite distance when a category is empty; the
    // regression floor keeps such targets finite without affecting signs
    let distance_floor = -2.0 * robot.arm_length();
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = configs
        .par_iter()
        .map(|x| match model.target_mode {
            TargetMode::Labels => {
                let y = oracle.check(x)?;
                Ok((y.iter().map(|&v| v as f64).collect(), None))
            }
            TargetMode::Distances => {
                let d = oracle.signed(x)?;
                let labels = d.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
                let dists = d.iter().map(|&v| v.max(distance_floor)).collect();
                Ok((labels, Some(dists)))
            }
        })
        .collect::<Result<_>>()?;
    let oracle_queries = oracle.calls();
    let labels = DMatrix::from_fn(configs.len(), cats, |r, c| rows[r].0[c]);

    // retrain warm: previous weights carry over, and their exact hypothesis
    // on the support rows is K_SS·W_S (non-support rows hold zero weight)
    let feats: Vec<DVector<f64>> = model
        .support
        .iter()
        .map(|s| model.train_kernel.feature(robot, s))
        .collect::<Result<_>>()?;
    let mut k_ss = DMatrix::zeros(m0, m0);
    for i in 0..m0 {
        for j in 0..=i {
            let v = model.train_kernel.eval_features(&feats[i], &feats[j]);
            k_ss[(i, j)] = v;
            k_ss[(j, i)] = v;
        }
    }
    let warm = WarmStart { hypothesis: &k_ss * &model.weights, weights: model.weights.clone() };
    let data = LabeledDataset::new(configs, labels.clone())?;
    // The warm attempt gets a bounded budget. When the boundary crosses a
    // tight cluster of carried-over supports, the one-row-at-a-time updates
    // crawl (each correction drags its near-duplicate neighbors the wrong
    // way) and leave pairs of large opposing weights that the redundancy
    // pass can never remove one at a time. Past the budget we rebuild from
    // scratch on the same relabeled data — no extra oracle queries — which
    // converges quickly and sheds that debris instead of compounding it
    // across timesteps.
    let warm_opts =
        TrainOptions { max_iterations: Some(2 * data.len()), ..TrainOptions::default() };
    let mut outcome = train(&data, &model.train_kernel, robot, Some(&warm), &warm_opts)?;
    if !outcome.separated {
        outcome = train(&data, &model.train_kernel, robot, None, &TrainOptions::default())?;
    }

    // refit interpolation in the model's target mode
    let targets = match model.target_mode {
        TargetMode::Labels => outcome.support.labels.clone(),
        TargetMode::Distances => {
            // map support rows back to their measured distances; dataset
            // rows dedup bit-exactly, so config bits identify the source row
            let index: std::collections::HashMap<Vec<u64>, usize> = data
                .configs
                .iter()
                .enumerate()
                .map(|(i, c)| (c.iter().map(|v| v.to_bits()).collect(), i))
                .collect();
            DMatrix::from_fn(outcome.support.len(), cats, |r, c| {
                let key: Vec<u64> =
                    outcome.support.configs[r].iter().map(|v| v.to_bits()).collect();
                rows[index[&key]].1.as_ref().expect("distances collected in this mode")[c]
            })
        }
    };
    let new_model = SupportModel::fit(
        robot.clone(),
        model.train_kernel.clone(),
        model.score_kernel.clone(),
        &outcome.support,
        targets,
        model.target_mode,
        model.bias.clone(),
        outcome.separated,
    )?;

    Ok(TimestepUpdate {
        new_samples,
        labels,
        model: new_model,
        oracle_queries,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{check_collision, Obstacle};
    use crate::kernels::KernelSpec;
    use crate::perceptron::train;
    use crate::scorer::default_bias;
    use rand::SeedableRng;
    use std::sync::OnceLock;

    fn arm2() -> RobotGeometry {
        RobotGeometry::new(vec![1.0, 1.0], 0.06, [0.0, 0.0], vec![None, None]).unwrap()
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

    fn train_model(ws: &Workspace, n: usize, seed: u64, mode: TargetMode) -> SupportModel {
        let robot = &ws.robot;
        let mut state = seed.max(1);
        let configs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(robot.dof, |_, _| xorshift(&mut state) * 2.0 * PI - PI))
            .collect();
        let labels = DMatrix::from_fn(n, ws.num_categories, |r, c| {
            check_collision(&configs[r], ws).unwrap()[c] as f64
        });
        let data = LabeledDataset::new(configs, labels).unwrap();
        let kernel = KernelSpec::default_train(robot);
        let out = train(&data, &kernel, robot, None, &TrainOptions::default()).unwrap();
        let targets = match mode {
            TargetMode::Labels => out.support.labels.clone(),
            TargetMode::Distances => {
                let floor = -2.0 * robot.arm_length();
                DMatrix::from_fn(out.support.len(), ws.num_categories, |r, c| {
                    crate::geometry::signed_distance(&out.support.configs[r], ws).unwrap()[c]
                        .max(floor)
                })
            }
        };
        SupportModel::fit(
            robot.clone(),
            kernel,
            KernelSpec::default_score(),
            &out.support,
            targets,
            mode,
            default_bias(ws.num_categories),
            out.separated,
        )
        .unwrap()
    }

    fn ball_ws(center: [f64; 2]) -> Workspace {
        Workspace::new(
            arm2(),
            vec![Obstacle::circle("ball", center, 0.35, 0)],
            1,
        )
        .unwrap()
    }

    /// Base scene and model, trained once and shared.
    fn base() -> &'static (Workspace, SupportModel) {
        static SCENE: OnceLock<(Workspace, SupportModel)> = OnceLock::new();
        SCENE.get_or_init(|| {
            let ws = ball_ws([1.1, 1.1]);
            let model = train_model(&ws, 1500, 41, TargetMode::Labels);
            assert!(model.separated);
            (ws, model)
        })
    }

    fn grid_oracle_agreement(model: &SupportModel, ws: &Workspace, g: usize) -> f64 {
        let mut agree = 0usize;
        for i in 0..g {
            for j in 0..g {
                let x = cfg(&[
                    -PI + 2.0 * PI * i as f64 / (g - 1) as f64,
                    -PI + 2.0 * PI * j as f64 / (g - 1) as f64,
                ]);
                let truth = check_collision(&x, ws).unwrap()[0] as f64;
                let pred = if model.score(&x).unwrap()[0] >= 0.0 { 1.0 } else { -1.0 };
                if truth == pred {
                    agree += 1;
                }
            }
        }
        agree as f64 / (g * g) as f64
    }

    #[test]
    fn exploitation_with_nu_zero_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = vec![cfg(&[0.1, 0.2])];
        let out = sample_exploitation(&s, 0, 0.1, &[None, None], &mut rng).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn exploitation_with_zero_spread_returns_the_support_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = vec![cfg(&[0.3, -0.2]), cfg(&[-1.0, 2.0])];
        let out = sample_exploitation(&s, 3, 0.0, &[None, None], &mut rng).unwrap();
        assert_eq!(out.len(), 6);
        for (i, x) in out.iter().enumerate() {
            assert_eq!(x, &s[i % 2]);
        }
    }

    #[test]
    fn exploitation_sample_mean_stays_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = vec![cfg(&[0.3, -0.2])];
        let n = 10_000;
        let sigma = 0.1;
        let out = sample_exploitation(&s, n, sigma, &[None, None], &mut rng).unwrap();
        for d in 0..2 {
            let mean = out.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            assert!(
                (mean - s[0][d]).abs() < 3.0 * sigma / (n as f64).sqrt(),
                "dim {d}: mean {mean} too far from {}",
                s[0][d]
            );
        }
    }

    #[test]
    fn exploitation_clamps_to_the_joint_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = vec![cfg(&[0.09, 0.0])];
        let limits = [Some([-0.1, 0.1]), None];
        let out = sample_exploitation(&s, 500, 0.5, &limits, &mut rng).unwrap();
        assert!(out.iter().all(|x| (-0.1..=0.1).contains(&x[0])));
        // the clamp must actually fire with a spread this large
        assert!(out.iter().any(|x| x[0] == 0.1 || x[0] == -0.1));
    }

    #[test]
    fn exploration_with_zeta_zero_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = sample_exploration(0, &[[-1.0, 1.0]], &mut rng).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn exploration_stays_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bounds = [[-PI, PI], [0.25, 0.5]];
        let out = sample_exploration(1000, &bounds, &mut rng).unwrap();
        for x in &out {
            assert!((-PI..PI).contains(&x[0]));
            assert!((0.25..0.5).contains(&x[1]));
        }
    }

    #[test]
    fn exploration_is_uniform_by_kolmogorov_smirnov() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bounds = [[-PI, PI], [0.0, 1.0]];
        let n = 10_000;
        let out = sample_exploration(n, &bounds, &mut rng).unwrap();
        // critical value at significance 0.01: sqrt(ln(2/α) / 2n)
        let crit = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
        for d in 0..2 {
            let [lo, hi] = bounds[d];
            let mut u: Vec<f64> = out.iter().map(|x| (x[d] - lo) / (hi - lo)).collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut dstat = 0.0f64;
            for (i, v) in u.iter().enumerate() {
                let above = (i + 1) as f64 / n as f64 - v;
                let below = v - i as f64 / n as f64;
                dstat = dstat.max(above).max(below);
            }
            assert!(dstat < crit, "dim {d}: KS statistic {dstat} ≥ {crit}");
        }
    }

    #[test]
    fn step_spends_exactly_the_advertised_oracle_budget() {
        let (ws, model) = base();
        let cfg = ActiveConfig { nu: 3, sigma: 0.1, zeta: 50, bounds: exploration_bounds(&ws.robot) };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let up = step(model, ws, &cfg, &mut rng).unwrap();
        let m0 = model.num_supports() as u64;
        assert_eq!(up.oracle_queries, m0 + 3 * m0 + 50);
        assert_eq!(up.new_samples.len() as u64, 3 * m0 + 50);
        assert_eq!(up.labels.nrows() as u64, m0 + 3 * m0 + 50);
    }

    #[test]
    fn step_on_an_unchanged_workspace_barely_moves_the_predictions() {
        let (ws, model) = base();
        let cfg = ActiveConfig::defaults(&ws.robot, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let up = step(model, ws, &cfg, &mut rng).unwrap();
        let g = 50;
        let mut disagree = 0usize;
        for i in 0..g {
            for j in 0..g {
                let x = cfg_point(i, j, g);
                let a = model.score(&x).unwrap()[0] >= 0.0;
                let b = up.model.score(&x).unwrap()[0] >= 0.0;
                if a != b {
                    disagree += 1;
                }
            }
        }
        assert!(
            (disagree as f64) < 0.02 * (g * g) as f64,
            "grid disagreement {disagree} / {}",
            g * g
        );
    }

    fn cfg_point(i: usize, j: usize, g: usize) -> DVector<f64> {
        cfg(&[
            -PI + 2.0 * PI * i as f64 / (g - 1) as f64,
            -PI + 2.0 * PI * j as f64 / (g - 1) as f64,
        ])
    }

    #[test]
    fn removing_an_obstacle_frees_its_region() {
        let keep = Obstacle::circle("keep", [1.1, 1.1], 0.35, 0);
        let drop = Obstacle::circle("drop", [-1.0, 0.9], 0.3, 0);
        let both = Workspace::new(arm2(), vec![keep.clone(), drop], 1).unwrap();
        let after = both.with_obstacles(vec![keep]).unwrap();
        let model = train_model(&both, 1500, 29, TargetMode::Labels);
        let cfg = ActiveConfig::defaults(&both.robot, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let up = step(&model, &after, &cfg, &mut rng).unwrap();
        // cells that collided only because of the dropped obstacle
        let g = 50;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..g {
            for j in 0..g {
                let x = cfg_point(i, j, g);
                if check_collision(&x, &both).unwrap()[0] == 1
                    && check_collision(&x, &after).unwrap()[0] == -1
                {
                    sum += up.model.score(&x).unwrap()[0];
                    count += 1;
                }
            }
        }
        assert!(count > 0, "dropped obstacle had its own colliding region");
        let mean = sum / count as f64;
        assert!(mean < 0.0, "mean score {mean} over freed region");
    }

    #[test]
    fn translated_obstacle_is_tracked_within_one_step() {
        let (_, model) = base();
        // one link length of travel
        let moved = ball_ws([1.1 - 1.0, 1.1]);
        let cfg = ActiveConfig::defaults(&moved.robot, 1500);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let up = step(model, &moved, &cfg, &mut rng).unwrap();
        let acc = grid_oracle_agreement(&up.model, &moved, 50);
        assert!(acc >= 0.9, "accuracy after one step: {acc}");
    }

    #[test]
    fn step_in_distance_mode_refits_measured_distances() {
        let ws = ball_ws([1.1, 1.1]);
        let model = train_model(&ws, 1200, 17, TargetMode::Distances);
        let cfg = ActiveConfig::defaults(&ws.robot, 1200);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let up = step(&model, &ws, &cfg, &mut rng).unwrap();
        assert_eq!(up.model.target_mode, TargetMode::Distances);
        // targets are the oracle's measurements at the new supports
        for (r, s) in up.model.support.iter().enumerate() {
            let d = crate::geometry::signed_distance(s, &ws).unwrap()[0];
            assert!((up.model.targets[(r, 0)] - d).abs() < 1e-12);
        }
        // and the refit interpolates them at the supports (up to the ridge
        // term that keeps the fit well-posed)
        for (r, s) in up.model.support.iter().enumerate() {
            let psi = up.model.score(s).unwrap()[0];
            assert!(
                (psi - up.model.targets[(r, 0)]).abs() < 1e-3,
                "support {r}: score {psi} vs target {}",
                up.model.targets[(r, 0)]
            );
        }
    }

    #[test]
    fn config_validation_rejects_degenerate_settings() {
        let (ws, model) = base();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let no_samples =
            ActiveConfig { nu: 0, sigma: 0.1, zeta: 0, bounds: exploration_bounds(&ws.robot) };
        assert!(step(model, ws, &no_samples, &mut rng).is_err());
        let bad_bounds = ActiveConfig { nu: 1, sigma: 0.1, zeta: 1, bounds: vec![[0.0, 1.0]] };
        assert!(step(model, ws, &bad_bounds, &mut rng).is_err());
        let bad_sigma =
            ActiveConfig { nu: 1, sigma: 0.0, zeta: 0, bounds: exploration_bounds(&ws.robot) };
        assert!(step(model, ws, &bad_sigma, &mut rng).is_err());
    }

    #[test]
    fn steps_are_deterministic_under_a_fixed_seed() {
        let (ws, model) = base();
        let cfg = ActiveConfig { nu: 2, sigma: 0.1, zeta: 40, bounds: exploration_bounds(&ws.robot) };
        let a = step(model, ws, &cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let b = step(model, ws, &cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        assert_eq!(a.new_samples, b.new_samples);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.model.support, b.model.support);
        assert_eq!(a.model.coefficients, b.model.coefficients);
    }
}
