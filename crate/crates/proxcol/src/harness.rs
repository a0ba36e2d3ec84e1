//! Experiment harness: seeded environment generation, end-to-end training,
//! the optimize-then-repair query pipeline, a benchmark grid with CSV
//! metrics, score-versus-distance correlation studies, and a dynamic
//! replanning runner for moving obstacles.
//!
//! Everything here is deterministic under its seed except wall-clock
//! fields, which are measured honestly and therefore vary run to run.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use crate::active::{self, ActiveConfig};
use crate::error::{Error, Result};
use crate::geometry::{check_collision, Obstacle, Oracle, Shape, Workspace};
use crate::kernels::KernelSpec;
use crate::kinematics::RobotGeometry;
use crate::perceptron::{train, LabeledDataset, TrainOptions};
use crate::scorer::{default_bias, SupportModel, TargetMode};
use crate::trajopt::{optimize, repair, GradientMode, ProblemSpec, SolveReport, Trajectory};

/// Planar arm used by all generated experiments: total reach 2.0 split over
/// equal links, no joint boxes (wrap-around joints).
pub fn default_robot(dof: usize) -> Result<RobotGeometry> {
    if dof == 0 {
        return Err(Error::InvalidInput("robot needs at least one joint".into()));
    }
    RobotGeometry::new(vec![2.0 / dof as f64; dof], 0.06, [0.0, 0.0], vec![None; dof])
}

/// Training-set size by arm complexity.
pub fn training_samples(dof: usize) -> usize {
    match dof {
        0..=2 => 3000,
        3 => 5000,
        _ => 10000,
    }
}

/// One start/goal pair, both collision-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "QueryFile", try_from = "QueryFile")]
pub struct Query {
    pub start: DVector<f64>,
    pub goal: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct QueryFile {
    start: Vec<f64>,
    goal: Vec<f64>,
}

impl From<Query> for QueryFile {
    fn from(q: Query) -> Self {
        Self { start: q.start.iter().copied().collect(), goal: q.goal.iter().copied().collect() }
    }
}

impl TryFrom<QueryFile> for Query {
    type Error = Error;

    fn try_from(f: QueryFile) -> Result<Self> {
        if f.start.len() != f.goal.len() || f.start.is_empty() {
            return Err(Error::InvalidInput("query endpoints must share a nonzero dof".into()));
        }
        Ok(Query {
            start: DVector::from_column_slice(&f.start),
            goal: DVector::from_column_slice(&f.goal),
        })
    }
}

/// Uniform configuration draw: joint boxes where bounded, [−π, π) otherwise.
pub fn uniform_config(robot: &RobotGeometry, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(robot.dof, |d, _| match robot.joint_limits[d] {
        Some([lo, hi]) => rng.gen_range(lo..hi),
        None => rng.gen_range(-PI..PI),
    })
}

/// Random scene: `n_obstacles` circles and rotated boxes in an annulus of
/// the arm's reach, sized 0.1–0.3 of the arm length, never touching the
/// base. Sparse scenes (≤ 2 obstacles) draw from a tighter band so the
/// obstacles actually contest the workspace.
pub fn gen_env(
    robot: &RobotGeometry,
    n_obstacles: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Workspace> {
    if n_obstacles == 0 {
        return Err(Error::InvalidInput("need at least one obstacle".into()));
    }
    let arm = robot.arm_length();
    let (rho_lo, rho_hi) =
        if n_obstacles <= 2 { (0.35 * arm, 0.80 * arm) } else { (0.25 * arm, 1.05 * arm) };
    let base_clear = 0.12 * arm;
    let mut obstacles = Vec::with_capacity(n_obstacles);
    for i in 0..n_obstacles {
        let mut placed = false;
        for _ in 0..1000 {
            let rho = rng.gen_range(rho_lo..rho_hi);
            let phi = rng.gen_range(-PI..PI);
            let center = [rho * phi.cos(), rho * phi.sin()];
            let size = rng.gen_range(0.1 * arm..0.3 * arm);
            let (shape, circum) = if rng.gen_bool(0.5) {
                (Shape::circle(center, size), size)
            } else {
                let w = 2.0 * size;
                let h = rng.gen_range(0.5..1.0) * w;
                let rot = rng.gen_range(-PI..PI);
                (Shape::rect(center, w, h).at_pose(center, rot), (w * w + h * h).sqrt() / 2.0)
            };
            if rho <= circum + base_clear {
                continue;
            }
            obstacles.push(Obstacle::new(format!("ob{i}"), shape, 0));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::SamplingBudget(format!(
                "could not place obstacle {i} of {n_obstacles} after 1000 tries"
            )));
        }
    }
    Workspace::new(robot.clone(), obstacles, 1)
}

/// `count` collision-free start/goal pairs, rejection-sampled against the
/// geometry oracle.
pub fn gen_queries(ws: &Workspace, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Query>> {
    let oracle = Oracle::new(ws);
    let mut free_config = || -> Result<DVector<f64>> {
        for _ in 0..5000 {
            let x = uniform_config(&ws.robot, rng);
            if oracle.check(&x)?.iter().all(|&v| v == -1) {
                return Ok(x);
            }
        }
        Err(Error::SamplingBudget("no free configuration in 5000 draws".into()))
    };
    (0..count).map(|_| Ok(Query { start: free_config()?, goal: free_config()? })).collect()
}

/// Model plus how it was obtained.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: SupportModel,
    pub n_samples: usize,
    /// Supports retained per training sample.
    pub support_fraction: f64,
    pub train_time_s: f64,
}

/// Sample `n` configurations uniformly, label them against the oracle, run
/// the perceptron, and fit the score interpolation with default kernels.
pub fn train_model(ws: &Workspace, n: usize, mode: TargetMode, seed: u64) -> Result<TrainReport> {
    train_model_with(
        ws,
        n,
        mode,
        seed,
        KernelSpec::default_train(&ws.robot),
        KernelSpec::default_score(),
    )
}

/// [`train_model`] with explicit kernels (correlation ablations swap both
/// for their raw-configuration variants).
pub fn train_model_with(
    ws: &Workspace,
    n: usize,
    mode: TargetMode,
    seed: u64,
    train_kernel: KernelSpec,
    score_kernel: KernelSpec,
) -> Result<TrainReport> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 training samples".into()));
    }
    let t0 = Instant::now();
    let robot = &ws.robot;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<DVector<f64>> = (0..n).map(|_| uniform_config(robot, &mut rng)).collect();
    let oracle = Oracle::new(ws);
    let cats = ws.num_categories;
    let floor = -2.0 * robot.arm_length();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = configs
        .par_iter()
        .map(|x| {
            let d = oracle.signed(x)?;
            let labels = d.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let dists = d.iter().map(|&v| v.max(floor)).collect();
            Ok((labels, dists))
        })
        .collect::<Result<_>>()?;
    let labels = DMatrix::from_fn(n, cats, |r, c| rows[r].0[c]);
    let data = LabeledDataset::new(configs, labels)?;
    let out = train(&data, &train_kernel, robot, None, &TrainOptions::default())?;
    let targets = match mode {
        TargetMode::Labels => out.support.labels.clone(),
        TargetMode::Distances => {
            let index: std::collections::HashMap<Vec<u64>, usize> = data
                .configs
                .iter()
                .enumerate()
                .map(|(i, c)| (c.iter().map(|v| v.to_bits()).collect(), i))
                .collect();
            DMatrix::from_fn(out.support.len(), cats, |r, c| {
                let key: Vec<u64> =
                    out.support.configs[r].iter().map(|v| v.to_bits()).collect();
                rows[index[&key]].1[c]
            })
        }
    };
    let support_fraction = out.support.len() as f64 / data.len() as f64;
    let model = SupportModel::fit(
        robot.clone(),
        train_kernel,
        score_kernel,
        &out.support,
        targets,
        mode,
        default_bias(cats),
        out.separated,
    )?;
    Ok(TrainReport { model, n_samples: n, support_fraction, train_time_s: t0.elapsed().as_secs_f64() })
}

/// Raw-configuration kernels for the no-forward-kinematics ablation; the
/// length scale tracks the joint-space diameter the way the default
/// tracks the arm length.
pub fn raw_train_kernel(dof: usize) -> KernelSpec {
    KernelSpec::Rq { gamma: 10.0 / (dof as f64 * PI * PI), power: 2.0 }
}

pub fn raw_score_kernel() -> KernelSpec {
    KernelSpec::Ph { degree: 1 }
}

/// One query through the full pipeline: optimize from the straight-line
/// initialization, and when the result is not verified feasible, run the
/// ground-truth repair continuation. Counters accumulate across both
/// stages; `repair_used` reports whether the repaired trajectory was
/// adopted.
pub fn solve_query(
    model: &SupportModel,
    ws: &Workspace,
    query: &Query,
    mode: GradientMode,
    seed: u64,
) -> Result<SolveReport> {
    let spec = ProblemSpec::new(model, ws, query.start.clone(), query.goal.clone())?;
    let init = spec.straight_init()?;
    solve_from(model, ws, &init, mode, seed)
}

/// [`solve_query`] from an explicit initial trajectory; the query is the
/// init's endpoints.
pub fn solve_from(
    model: &SupportModel,
    ws: &Workspace,
    init: &Trajectory,
    mode: GradientMode,
    seed: u64,
) -> Result<SolveReport> {
    let mut spec =
        ProblemSpec::new(model, ws, init.start().clone(), init.goal().clone())?;
    spec.seed = seed;
    let first = optimize(&spec, init, mode)?;
    if first.feasible {
        return Ok(first);
    }
    // Repair polishes a near-feasible result with ground-truth gradients; a
    // short budget keeps a badly broken path from devolving into a full
    // oracle-driven re-solve at hundreds of ground-truth calls a step.
    spec.max_iterations = 40;
    let fixed = repair(&first.trajectory, &spec)?;
    Ok(SolveReport {
        trajectory: fixed.trajectory,
        feasible: fixed.feasible,
        mode,
        iterations: first.iterations + fixed.iterations,
        restarts: first.restarts,
        proxy_checks: first.proxy_checks + fixed.proxy_checks,
        oracle_checks: first.oracle_checks + fixed.oracle_checks,
        objective: fixed.objective,
        max_violation: fixed.max_violation,
        repair_used: fixed.repair_used,
    })
}

/// Benchmark grid dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub dofs: Vec<usize>,
    pub obstacle_counts: Vec<usize>,
    /// Environments per (dof, obstacle-count) cell.
    pub environments: usize,
    /// Queries per environment.
    pub queries: usize,
    pub modes: Vec<GradientMode>,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// Small grid that finishes on a desk machine: 2/3-DOF, {1, 5, 10}
    /// obstacles, 10 environments × 5 queries, analytic vs numeric-oracle.
    pub fn desk(seed: u64) -> Self {
        Self {
            dofs: vec![2, 3],
            obstacle_counts: vec![1, 5, 10],
            environments: 10,
            queries: 5,
            modes: vec![GradientMode::Analytic, GradientMode::NumericOracle],
            seed,
        }
    }

    /// The full grid: adds 7-DOF, {2, 20} obstacle counts, the
    /// numeric-proxy mode, and 50 environments × 10 queries.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            dofs: vec![2, 3, 7],
            obstacle_counts: vec![1, 2, 5, 10, 20],
            environments: 50,
            queries: 10,
            modes: vec![
                GradientMode::Analytic,
                GradientMode::NumericProxy,
                GradientMode::NumericOracle,
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dofs.is_empty() || self.dofs.iter().any(|d| ![2, 3, 7].contains(d)) {
            return Err(Error::InvalidInput("dofs must be a nonempty subset of {2, 3, 7}".into()));
        }
        if self.obstacle_counts.is_empty()
            || self.obstacle_counts.iter().any(|n| ![1, 2, 5, 10, 20].contains(n))
        {
            return Err(Error::InvalidInput(
                "obstacle counts must be a nonempty subset of {1, 2, 5, 10, 20}".into(),
            ));
        }
        if self.environments == 0 || self.queries == 0 || self.modes.is_empty() {
            return Err(Error::InvalidInput("benchmark counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One benchmark measurement. Everything except the two wall-time columns
/// is reproducible byte-for-byte under the spec's seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub schema_version: u32,
    pub dof: usize,
    pub n_obstacles: usize,
    pub mode: String,
    pub env: usize,
    pub query: usize,
    pub success: bool,
    pub wall_time_s: f64,
    pub proxy_checks: u64,
    pub oracle_checks: u64,
    pub trajectory_cost: f64,
    pub repair_used: bool,
    pub train_time_share_s: f64,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Run the whole grid. Cells run in parallel on independent RNG streams
/// derived from the master seed, so scheduling cannot change any sampled
/// value; rows come back sorted by (dof, obstacles, env, query, mode).
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for (di, &dof) in spec.dofs.iter().enumerate() {
        for (ci, &n_obs) in spec.obstacle_counts.iter().enumerate() {
            for env in 0..spec.environments {
                let stream =
                    ((di * spec.obstacle_counts.len() + ci) * spec.environments + env) as u64 + 1;
                cells.push((dof, n_obs, env, stream));
            }
        }
    }
    let rows: Vec<Vec<MetricsRow>> = cells
        .par_iter()
        .map(|&(dof, n_obs, env, stream)| run_cell(spec, dof, n_obs, env, stream))
        .collect::<Result<_>>()?;
    let mut rows: Vec<MetricsRow> = rows.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.dof, a.n_obstacles, a.env, a.query, &a.mode)
            .cmp(&(b.dof, b.n_obstacles, b.env, b.query, &b.mode))
    });
    Ok(rows)
}

fn run_cell(
    spec: &BenchmarkSpec,
    dof: usize,
    n_obs: usize,
    env: usize,
    stream: u64,
) -> Result<Vec<MetricsRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let robot = default_robot(dof)?;
    let ws = gen_env(&robot, n_obs, &mut rng)?;
    let queries = gen_queries(&ws, spec.queries, &mut rng)?;
    let train_seed = rng.gen::<u64>();
    let solve_seeds: Vec<u64> =
        (0..spec.queries * spec.modes.len()).map(|_| rng.gen()).collect();
    let trained = train_model(&ws, training_samples(dof), TargetMode::Labels, train_seed)?;
    let mut rows = Vec::with_capacity(spec.queries * spec.modes.len());
    for (qi, query) in queries.iter().enumerate() {
        for (mi, &mode) in spec.modes.iter().enumerate() {
            let t0 = Instant::now();
            let report =
                solve_query(&trained.model, &ws, query, mode, solve_seeds[qi * spec.modes.len() + mi])?;
            rows.push(MetricsRow {
                schema_version: METRICS_SCHEMA_VERSION,
                dof,
                n_obstacles: n_obs,
                mode: mode.to_string(),
                env,
                query: qi,
                success: report.feasible,
                wall_time_s: t0.elapsed().as_secs_f64(),
                proxy_checks: report.proxy_checks,
                oracle_checks: report.oracle_checks,
                trajectory_cost: report.objective,
                repair_used: report.repair_used,
                train_time_share_s: trained.train_time_s,
            });
        }
    }
    Ok(rows)
}

pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv(rows: &[MetricsRow], path: impl AsRef<std::path::Path>) -> Result<()> {
    write_metrics_csv(rows, std::fs::File::create(path)?)
}

pub fn load_metrics_csv(path: impl AsRef<std::path::Path>) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Per-(dof, mode) aggregate of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dof: usize,
    pub mode: String,
    pub total: usize,
    pub solved: usize,
    pub success_rate: f64,
    /// Oracle checks per solved query.
    pub mean_oracle_checks: f64,
    pub median_oracle_checks: f64,
    pub mean_proxy_checks: f64,
    pub mean_cost: f64,
    pub mean_wall_time_s: f64,
}

impl std::fmt::Display for SummaryRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dof={} mode={:<14} success={}/{} ({:.1}%)  oracle-checks mean={:.0} median={:.0}  proxy-checks mean={:.0}  cost={:.3}  wall={:.3}s",
            self.dof,
            self.mode,
            self.solved,
            self.total,
            100.0 * self.success_rate,
            self.mean_oracle_checks,
            self.median_oracle_checks,
            self.mean_proxy_checks,
            self.mean_cost,
            self.mean_wall_time_s,
        )
    }
}

/// Aggregate rows by (dof, mode); check-count, cost, and time statistics
/// are over solved queries only.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&MetricsRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.dof, row.mode.clone())).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((dof, mode), rows)| {
            let total = rows.len();
            let solved: Vec<&&MetricsRow> = rows.iter().filter(|r| r.success).collect();
            let n = solved.len().max(1) as f64;
            let mut checks: Vec<u64> = solved.iter().map(|r| r.oracle_checks).collect();
            checks.sort_unstable();
            let median = if checks.is_empty() {
                0.0
            } else {
                0.5 * (checks[(checks.len() - 1) / 2] + checks[checks.len() / 2]) as f64
            };
            SummaryRow {
                dof,
                mode,
                total,
                solved: solved.len(),
                success_rate: solved.len() as f64 / total.max(1) as f64,
                mean_oracle_checks: solved.iter().map(|r| r.oracle_checks as f64).sum::<f64>() / n,
                median_oracle_checks: median,
                mean_proxy_checks: solved.iter().map(|r| r.proxy_checks as f64).sum::<f64>() / n,
                mean_cost: solved.iter().map(|r| r.trajectory_cost).sum::<f64>() / n,
                mean_wall_time_s: solved.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Average ranks (ties share the mean of their positions).
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Rank correlation: Pearson on average ranks, so ties are well-defined.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    pearson(&ranks(xs), &ranks(ys))
}

/// Score-versus-true-distance study on uniform samples.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    /// `(ψ_c, d′_c)` per sample and category; categories with no obstacle
    /// anywhere (no finite distance) are skipped.
    pub pairs: Vec<[f64; 2]>,
    pub spearman: f64,
    pub pearson: f64,
    /// Variance explained by the least-squares line (pearson²).
    pub r_squared: f64,
}

pub fn correlate(
    model: &SupportModel,
    ws: &Workspace,
    n_samples: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = Oracle::new(ws);
    let mut pairs = Vec::with_capacity(n_samples * ws.num_categories);
    for _ in 0..n_samples {
        let x = uniform_config(&ws.robot, &mut rng);
        let psi = model.score(&x)?;
        let d = oracle.signed(&x)?;
        for c in 0..ws.num_categories {
            if d[c].is_finite() {
                pairs.push([psi[c], d[c]]);
            }
        }
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    let s = spearman(&xs, &ys);
    let p = pearson(&xs, &ys);
    Ok(CorrelationReport { pairs, spearman: s, pearson: p, r_squared: p * p })
}

pub fn save_correlation_csv(
    report: &CorrelationReport,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["score", "signed_distance"])?;
    for pair in &report.pairs {
        w.write_record([pair[0].to_string(), pair[1].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of a 2-DOF `g × g` grid over [−π, π]² where the model's sign
/// agrees with the oracle in every category.
pub fn grid_accuracy(model: &SupportModel, ws: &Workspace, g: usize) -> Result<f64> {
    if model.dof() != 2 {
        return Err(Error::InvalidInput("grid accuracy is defined for 2-dof models".into()));
    }
    let oracle = Oracle::new(ws);
    let mut agree = 0usize;
    for i in 0..g {
        for j in 0..g {
            let x = DVector::from_column_slice(&[
                -PI + 2.0 * PI * i as f64 / (g - 1) as f64,
                -PI + 2.0 * PI * j as f64 / (g - 1) as f64,
            ]);
            if signs_match(model, &oracle, &x)? {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (g * g) as f64)
}

/// Sign-agreement fraction on `n` uniform samples (any dof).
pub fn sampled_accuracy(
    model: &SupportModel,
    ws: &Workspace,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = Oracle::new(ws);
    let mut agree = 0usize;
    for _ in 0..n {
        let x = uniform_config(&ws.robot, &mut rng);
        if signs_match(model, &oracle, &x)? {
            agree += 1;
        }
    }
    Ok(agree as f64 / n as f64)
}

fn signs_match(model: &SupportModel, oracle: &Oracle, x: &DVector<f64>) -> Result<bool> {
    let psi = model.score(x)?;
    let truth = oracle.check(x)?;
    Ok((0..truth.len()).all(|c| (psi[c] >= 0.0) == (truth[c] == 1)))
}

/// Per-category minimum clearance along a trajectory: the most negative
/// the signed distance gets, flipped positive. 0 or less means contact.
pub fn path_clearance(
    traj: &Trajectory,
    ws: &Workspace,
    resolution: f64,
) -> Result<DVector<f64>> {
    let oracle = Oracle::new(ws);
    let cats = ws.num_categories;
    let mut worst = DVector::from_element(cats, f64::NEG_INFINITY);
    let mut probe = |x: &DVector<f64>| -> Result<()> {
        let d = oracle.signed(x)?;
        for c in 0..cats {
            worst[c] = worst[c].max(d[c]);
        }
        Ok(())
    };
    probe(&traj.waypoints[0])?;
    for s in 0..traj.len() - 1 {
        let a = &traj.waypoints[s];
        let b = &traj.waypoints[s + 1];
        let steps = ((b - a).norm() / resolution).ceil().max(1.0) as usize;
        for k in 1..=steps {
            let x = a + (b - a) * (k as f64 / steps as f64);
            probe(&x)?;
        }
    }
    Ok(-worst)
}

/// Scene for safety-bias studies: two circles whose configuration-space
/// collision bands flank a diagonal free corridor, the important one in
/// category 0, the ordinary one in category 1. The query endpoints fold
/// the elbow past the bands, where the arm is too short to reach either
/// obstacle; the path between them must traverse the corridor, so every
/// binding clearance belongs to a waypoint the optimizer can move.
pub fn gen_bias_scene(seed: u64) -> Result<(Workspace, Query)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot = default_robot(2)?;
    let arm = robot.arm_length();
    let cx = rng.gen_range(0.5 * arm..0.7 * arm);
    let d = rng.gen_range(0.29 * arm..0.35 * arm);
    let r_hi = rng.gen_range(0.085 * arm..0.115 * arm);
    let r_lo = rng.gen_range(0.085 * arm..0.115 * arm);
    let important_on_top = rng.gen_bool(0.5);
    let (y_hi, y_lo) = if important_on_top { (d, -d) } else { (-d, d) };
    let ws = Workspace::new(
        robot,
        vec![
            Obstacle::circle("important", [cx, y_hi], r_hi, 0),
            Obstacle::circle("ordinary", [cx, y_lo], r_lo, 1),
        ],
        2,
    )?;
    // The corridor runs diagonally, so extend it tangentially past the band
    // tips; endpoints on that line keep the straight ramp chords inside the
    // widening gap instead of clipping a band edge on the way out.
    let extend = |e: f64| -> Result<DVector<f64>> {
        let p = corridor_point(&ws, e)?;
        let q = corridor_point(&ws, e - 0.2 * e.signum())?;
        Ok(&p + (&p - &q) * ((FOLDED_ELBOW - e.abs()) / 0.2))
    };
    let query = Query { start: extend(CORRIDOR_ELBOW)?, goal: extend(-CORRIDOR_ELBOW)? };
    Ok((ws, query))
}

/// Elbow span over which both collision bands of a bias scene are present
/// for every parameter draw, so the squeeze corridor is well defined.
const CORRIDOR_ELBOW: f64 = 1.4;

/// Elbow angle past which the folded arm cannot reach either obstacle of a
/// bias scene, whatever the shoulder angle.
const FOLDED_ELBOW: f64 = 2.6;

/// Midpoint of the narrowest free shoulder interval bounded by one
/// obstacle category on the left and the other on the right (cyclically),
/// at a fixed elbow angle — the between-the-bands squeeze corridor, as
/// opposed to the wide-open region around both bands.
fn corridor_point(ws: &Workspace, elbow: f64) -> Result<DVector<f64>> {
    let n = 720usize;
    let step = 2.0 * PI / n as f64;
    let hits: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let x = DVector::from_column_slice(&[-PI + i as f64 * step, elbow]);
            let c = check_collision(&x, ws)?;
            Ok(c.iter().position(|&v| v == 1))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, usize)> = None; // (gap width, midpoint index)
    let mut i = 0;
    while i < n {
        if hits[i].is_some() {
            i += 1;
            continue;
        }
        // the free run starting here, cyclically
        let mut len = 1;
        while len < n && hits[(i + len) % n].is_none() {
            len += 1;
        }
        if len < n {
            let left = hits[(i + n - 1) % n];
            let right = hits[(i + len) % n];
            if left.is_some() && left != right && best.map_or(true, |(w, _)| len < w) {
                best = Some((len, (i + len / 2) % n));
            }
        }
        i += len;
    }
    let (_, mid) = best.ok_or_else(|| {
        Error::SamplingBudget(format!("no corridor between the obstacle bands at elbow {elbow}"))
    })?;
    Ok(DVector::from_column_slice(&[-PI + mid as f64 * step, elbow]))
}

/// Initial trajectory tracing the squeeze corridor of a bias scene from
/// elbow `+elbow` down to `-elbow`. Unlike the straight chord between the
/// corridor's ends, this stays between the obstacle bands the whole way,
/// leaving the solver a homotopy-neutral starting point.
pub fn corridor_init(ws: &Workspace, elbow: f64, t: usize) -> Result<Trajectory> {
    if t < 2 {
        return Err(Error::InvalidInput("corridor init needs at least 2 waypoints".into()));
    }
    let pts = (0..t)
        .map(|k| corridor_point(ws, elbow - 2.0 * elbow * k as f64 / (t - 1) as f64))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(pts)
}

/// One safety-bias trial on a [`gen_bias_scene`] workspace.
#[derive(Debug, Clone)]
pub struct BiasOutcome {
    pub workspace: Workspace,
    /// High-category ε of the important-biased solve; the other category
    /// got a tenth of it.
    pub magnitude: f64,
    /// Both one-sided solves succeeded — the corridor is passable hugging
    /// either obstacle, so the bias had a real choice to make.
    pub qualified: bool,
    /// Per-category clearances of the trajectory biased toward the
    /// important category (index 0 = important, 1 = ordinary).
    pub important_biased: DVector<f64>,
    /// Clearances of the mirror-image solve (bias on the ordinary side).
    pub ordinary_biased: DVector<f64>,
}

/// Solve a bias scene twice with a 10:1 safety-bias ratio — once favoring
/// each category — from the same corridor-following init. The bias
/// magnitude adapts to the scene: it starts just beyond the corridor's own
/// predicted margin so the constraint must reshape the path, and backs off
/// when that proves infeasible. Solves settle (`min_iterations`) so the
/// returned geometry reflects the biases, and never use ground-truth
/// repair, which would overwrite that geometry.
pub fn bias_experiment(seed: u64) -> Result<BiasOutcome> {
    let (ws, query) = gen_bias_scene(seed)?;
    let mut model = train_model(&ws, training_samples(2), TargetMode::Labels, seed)?.model;
    // Ramp down from the folded-arm start into the corridor, follow it
    // through the squeeze, and ramp back out to the folded-arm goal.
    let corridor = corridor_init(&ws, CORRIDOR_ELBOW, 16)?;
    let ramp = 4usize;
    let (a, b) = (corridor.start().clone(), corridor.goal().clone());
    let mut pts = Vec::with_capacity(corridor.len() + 2 * ramp);
    for k in 0..ramp {
        pts.push(&query.start + (&a - &query.start) * (k as f64 / ramp as f64));
    }
    pts.extend(corridor.waypoints.iter().cloned());
    for k in 1..ramp {
        pts.push(&b + (&query.goal - &b) * (k as f64 / ramp as f64));
    }
    pts.push(query.goal.clone());
    let init = Trajectory::new(pts)?;

    let mut solve_side = |hi: usize| -> Result<Option<(f64, DVector<f64>)>> {
        let mut worst = f64::NEG_INFINITY;
        for x in &corridor.waypoints {
            worst = worst.max(model.score(x)?[hi]);
        }
        let mut m = 1.3 * (-worst).max(0.1);
        for _ in 0..4 {
            let mut bias = DVector::from_element(2, m / 10.0);
            bias[hi] = m;
            model.bias = bias;
            let mut spec =
                ProblemSpec::new(&model, &ws, init.start().clone(), init.goal().clone())?;
            spec.seed = seed;
            spec.max_iterations = 300;
            spec.min_iterations = 200;
            spec.max_restarts = 0;
            let r = optimize(&spec, &init, GradientMode::Analytic)?;
            if r.feasible {
                return Ok(Some((m, path_clearance(&r.trajectory, &ws, 0.02)?)));
            }
            m /= 1.5;
        }
        Ok(None)
    };

    let important = solve_side(0)?;
    let ordinary = solve_side(1)?;
    // a corridor so tight that only a token bias fits cannot demonstrate a
    // choice between sides
    let roomy = |side: &Option<(f64, DVector<f64>)>| {
        side.as_ref().map_or(false, |(m, _)| *m >= 0.4)
    };
    let qualified = roomy(&important) && roomy(&ordinary);
    let (magnitude, important_biased) =
        important.unwrap_or((0.0, DVector::zeros(ws.num_categories)));
    let (_, ordinary_biased) = ordinary.unwrap_or((0.0, DVector::zeros(ws.num_categories)));
    Ok(BiasOutcome { workspace: ws, magnitude, qualified, important_biased, ordinary_biased })
}

/// Obstacle pose for one script step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 2],
    #[serde(default)]
    pub rotation: f64,
}

/// Moving-obstacle script: one map per timestep, keyed by obstacle name;
/// unlisted obstacles stay put.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotionScript {
    pub steps: Vec<BTreeMap<String, Pose>>,
}

impl MotionScript {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The base workspace with scripted obstacles moved to their step poses.
pub fn apply_script_step(base: &Workspace, step: &BTreeMap<String, Pose>) -> Result<Workspace> {
    for name in step.keys() {
        if !base.obstacles.iter().any(|o| &o.name == name) {
            return Err(Error::InvalidInput(format!("script moves unknown obstacle `{name}`")));
        }
    }
    let obstacles = base
        .obstacles
        .iter()
        .map(|o| match step.get(&o.name) {
            Some(pose) => Obstacle::new(
                o.name.clone(),
                o.shape.at_pose(pose.position, pose.rotation),
                o.category,
            ),
            None => o.clone(),
        })
        .collect();
    base.with_obstacles(obstacles)
}

/// One timestep of a dynamic run.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicStep {
    /// Model-update wall time (resampling, relabeling, retrain, refit).
    pub update_s: f64,
    pub solve_s: f64,
    pub oracle_queries_update: u64,
    /// Post-update sign agreement with the moved workspace.
    pub accuracy: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicReport {
    pub initial_train_s: f64,
    pub n_train: usize,
    pub steps: Vec<DynamicStep>,
}

impl DynamicReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }
}

/// Replan the same query against a workspace that moves each timestep:
/// train once on the base scene, then per step resynchronize the model
/// and solve again from scratch.
pub fn run_dynamic(
    base: &Workspace,
    script: &MotionScript,
    query: &Query,
    mode: GradientMode,
    target_mode: TargetMode,
    n_train: usize,
    seed: u64,
) -> Result<DynamicReport> {
    let trained = train_model(base, n_train, target_mode, seed)?;
    let mut model = trained.model;
    let cfg = ActiveConfig::defaults(&base.robot, n_train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut steps = Vec::with_capacity(script.steps.len());
    for (t, poses) in script.steps.iter().enumerate() {
        let ws_t = apply_script_step(base, poses)?;
        let update = active::step(&model, &ws_t, &cfg, &mut rng)?;
        model = update.model;
        let t0 = Instant::now();
        let report = solve_query(&model, &ws_t, query, mode, seed.wrapping_add(t as u64))?;
        let solve_s = t0.elapsed().as_secs_f64();
        let accuracy = if base.robot.dof == 2 {
            grid_accuracy(&model, &ws_t, 50)?
        } else {
            sampled_accuracy(&model, &ws_t, 2000, seed ^ t as u64)?
        };
        steps.push(DynamicStep {
            update_s: update.wall_time_s,
            solve_s,
            oracle_queries_update: update.oracle_queries,
            accuracy,
            report,
        });
    }
    Ok(DynamicReport { initial_train_s: trained.train_time_s, n_train, steps })
}
