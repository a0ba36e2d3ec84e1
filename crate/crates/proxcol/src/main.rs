//! Thin command-line front end over [`proxcol::harness`].
//!
//! Completed runs exit 0 even when the planned work fails (an infeasible
//! trajectory, a non-separated model); configuration and I/O problems exit
//! nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use proxcol::geometry::Workspace;
use proxcol::harness::{
    correlate, default_robot, gen_env, gen_queries, raw_score_kernel, raw_train_kernel,
    run_benchmark, run_dynamic, save_correlation_csv, save_metrics_csv, solve_query, summarize,
    train_model, train_model_with, training_samples, BenchmarkSpec, MotionScript, Query,
};
use proxcol::scorer::{SupportModel, TargetMode};
use proxcol::trajopt::GradientMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "proxcol",
    version,
    about = "Proxy collision models and safety-aware trajectory optimization for planar arms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Targets {
    /// Interpolate the ±1 collision labels.
    Labels,
    /// Interpolate measured signed distances.
    Distances,
}

impl From<Targets> for TargetMode {
    fn from(t: Targets) -> Self {
        match t {
            Targets::Labels => TargetMode::Labels,
            Targets::Distances => TargetMode::Distances,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random workspace, plus optional start/goal queries.
    GenEnv {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Joints on the arm (2, 3, or 7 in the experiments).
        #[arg(long, default_value_t = 2)]
        dof: usize,
        #[arg(long, default_value_t = 5)]
        obstacles: usize,
        /// Workspace JSON destination.
        #[arg(long)]
        out: PathBuf,
        /// Collision-free start/goal pairs to sample alongside.
        #[arg(long, default_value_t = 5)]
        queries: usize,
        /// Query JSON destination; queries are skipped when absent.
        #[arg(long)]
        queries_out: Option<PathBuf>,
    },
    /// Train a proxy collision model on a workspace.
    Train {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Uniform training samples; defaults to 3000/5000/10000 by dof.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum, default_value_t = Targets::Labels)]
        targets: Targets,
        /// Model JSON destination.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize one start/goal query against a trained model.
    Optimize {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "analytic")]
        mode: GradientMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start configuration as comma-separated joint angles; when absent
        /// a collision-free query is sampled from the seed.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        /// Goal configuration; required exactly when --start is given.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        goal: Option<Vec<f64>>,
        /// Solve-report JSON destination (includes the trajectory).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark grid and write a metrics CSV.
    Benchmark {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full grid (2/3/7-dof, {1,2,5,10,20} obstacles, 50 environments ×
        /// 10 queries, all three modes) instead of the desk-size default.
        #[arg(long)]
        paper_scale: bool,
        /// Metrics CSV destination.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample configurations and compare proxy scores with true distances.
    Correlate {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Skip the raw-configuration (no forward kinematics) ablation.
        #[arg(long)]
        no_ablation: bool,
        /// Pair CSV destination (score, signed distance).
        #[arg(long)]
        out: PathBuf,
    },
    /// Replan one query while scripted obstacles move, updating the model
    /// between steps instead of retraining.
    Dynamic {
        #[arg(long)]
        workspace: PathBuf,
        /// Motion script JSON: a list of steps, each mapping obstacle names
        /// to {"position": [x, y], "rotation": radians}.
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value = "analytic")]
        mode: GradientMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial training samples; defaults to 3000/5000/10000 by dof.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_enum, default_value_t = Targets::Distances)]
        targets: Targets,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        goal: Option<Vec<f64>>,
        /// Per-step report JSON destination.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenEnv { seed, dof, obstacles, out, queries, queries_out } => {
            let robot = default_robot(dof)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ws = gen_env(&robot, obstacles, &mut rng)?;
            ws.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}: {dof}-dof arm, {obstacles} obstacles", out.display());
            if let Some(qpath) = queries_out {
                let qs = gen_queries(&ws, queries, &mut rng)?;
                std::fs::write(&qpath, serde_json::to_string_pretty(&qs)?)
                    .with_context(|| format!("writing {}", qpath.display()))?;
                println!("wrote {}: {queries} collision-free queries", qpath.display());
            }
            Ok(())
        }
        Command::Train { workspace, seed, samples, targets, out } => {
            let ws = load_workspace(&workspace)?;
            let n = samples.unwrap_or_else(|| training_samples(ws.robot.dof));
            let report = train_model(&ws, n, targets.into(), seed)?;
            println!(
                "trained on {n} samples in {:.3}s: {} supports ({:.1}% of data)",
                report.train_time_s,
                report.model.num_supports(),
                100.0 * report.support_fraction,
            );
            if !report.model.separated {
                println!("warning: training stopped before separating the data; scores near the boundary are less trustworthy");
            }
            report.model.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Optimize { workspace, model, mode, seed, start, goal, out } => {
            let ws = load_workspace(&workspace)?;
            let model = load_model(&model)?;
            let query = match (start, goal) {
                (Some(s), Some(g)) => Query {
                    start: DVector::from_vec(s),
                    goal: DVector::from_vec(g),
                },
                (None, None) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    gen_queries(&ws, 1, &mut rng)?.pop().expect("one query")
                }
                _ => bail!("--start and --goal must be given together"),
            };
            let report = solve_query(&model, &ws, &query, mode, seed)?;
            println!(
                "mode={} feasible={} iterations={} restarts={} proxy-checks={} oracle-checks={} objective={:.4} repair-used={}",
                report.mode,
                report.feasible,
                report.iterations,
                report.restarts,
                report.proxy_checks,
                report.oracle_checks,
                report.objective,
                report.repair_used,
            );
            report.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Benchmark { seed, paper_scale, out } => {
            let spec =
                if paper_scale { BenchmarkSpec::paper_scale(seed) } else { BenchmarkSpec::desk(seed) };
            let rows = run_benchmark(&spec)?;
            for line in summarize(&rows) {
                println!("{line}");
            }
            save_metrics_csv(&rows, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Correlate { workspace, model, seed, samples, no_ablation, out } => {
            let ws = load_workspace(&workspace)?;
            let model = load_model(&model)?;
            let report = correlate(&model, &ws, samples, seed)?;
            println!(
                "fk kernels:  spearman={:.4} pearson={:.4} r2={:.4} over {} pairs",
                report.spearman,
                report.pearson,
                report.r_squared,
                report.pairs.len(),
            );
            if !no_ablation {
                let dof = ws.robot.dof;
                let ablated = train_model_with(
                    &ws,
                    training_samples(dof),
                    model.target_mode,
                    seed,
                    raw_train_kernel(dof),
                    raw_score_kernel(),
                )?;
                let raw = correlate(&ablated.model, &ws, samples, seed)?;
                println!(
                    "raw kernels: spearman={:.4} pearson={:.4} r2={:.4} (no forward kinematics)",
                    raw.spearman, raw.pearson, raw.r_squared,
                );
            }
            save_correlation_csv(&report, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Dynamic { workspace, script, mode, seed, samples, targets, start, goal, out } => {
            let ws = load_workspace(&workspace)?;
            let script = MotionScript::load(&script)
                .with_context(|| format!("reading {}", script.display()))?;
            let query = match (start, goal) {
                (Some(s), Some(g)) => Query {
                    start: DVector::from_vec(s),
                    goal: DVector::from_vec(g),
                },
                (None, None) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    gen_queries(&ws, 1, &mut rng)?.pop().expect("one query")
                }
                _ => bail!("--start and --goal must be given together"),
            };
            let n = samples.unwrap_or_else(|| training_samples(ws.robot.dof));
            let report = run_dynamic(&ws, &script, &query, mode, targets.into(), n, seed)?;
            println!("initial training: {:.3}s on {n} samples", report.initial_train_s);
            for (t, step) in report.steps.iter().enumerate() {
                println!(
                    "step {t}: update {:.3}s ({} oracle queries), solve {:.3}s, feasible={}, accuracy={:.3}",
                    step.update_s,
                    step.oracle_queries_update,
                    step.solve_s,
                    step.report.feasible,
                    step.accuracy,
                );
            }
            if !report.steps.is_empty() {
                let mean_update = report.steps.iter().map(|s| s.update_s).sum::<f64>()
                    / report.steps.len() as f64;
                println!(
                    "mean update {:.3}s = {:.2}x initial training",
                    mean_update,
                    mean_update / report.initial_train_s.max(1e-12),
                );
            }
            report.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn load_workspace(path: &Path) -> Result<Workspace> {
    Workspace::load(path).with_context(|| format!("reading workspace {}", path.display()))
}

fn load_model(path: &Path) -> Result<SupportModel> {
    SupportModel::load(path).with_context(|| format!("reading model {}", path.display()))
}
