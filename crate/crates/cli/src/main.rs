use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use raypose::bench::{self, BenchRow, StabilitySummary};
use raypose::io::{self, MergeRecord, RobustRecord, SolveRecord, TransformRecord};
use raypose::pipeline::{self, Subset};
use raypose::robust::{ransac_gdls, RobustOutcome};
use raypose::solver::{gdls_solve_with, ScaleMode, SolverOptions};
use raypose::Error;

mod config;

use config::Settings;

#[derive(Parser)]
#[command(name = "raypose", version, about = "Generalized pose-and-scale estimation and reconstruction merging")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "RAYPOSE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Override a setting, e.g. `--config confidence=0.999`. Repeatable.
    #[arg(long = "config", value_name = "KEY=VALUE")]
    config: Vec<String>,

    /// File of `key=value` lines, applied before `--config`.
    #[arg(long, value_name = "PATH")]
    config_file: Option<PathBuf>,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Noise,
    Scalability,
    Stability,
    City,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the similarity of a distributed camera from a correspondence file.
    Solve {
        #[arg(long)]
        input: PathBuf,
        /// Freeze the scale at 1 (central cameras, or known scale).
        #[arg(long)]
        fix_scale: bool,
        /// Wrap the solver in RANSAC/PROSAC.
        #[arg(long)]
        robust: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Localize one reconstruction against another through shared point ids.
    Align {
        base: PathBuf,
        other: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Hierarchically merge reconstructions into one frame.
    Merge {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Merge report path; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        max_group_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a synthetic experiment and write its CSV.
    Bench {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical stability histogram on minimal noise-free problems.
    Stability {
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Estimation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::RankDeficient { .. } | Error::NoSolution(_) | Error::NotLocalizable(_) => {
                Failure::Estimation(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn settings(common: &Common) -> Result<Settings, Failure> {
    let mut s = Settings::default().with_seed(common.seed);
    if let Some(path) = &common.config_file {
        s.load_file(path).map_err(Failure::Usage)?;
    }
    for pair in &common.config {
        s.set_pair(pair).map_err(Failure::Usage)?;
    }
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn warn_all(source: &Path, warnings: &[String]) {
    for w in warnings {
        log::warn!("{}: {w}", source.display());
    }
}

fn solve(input: &Path, fix_scale: bool, robust: bool, common: &Common) -> Outcome {
    let s = settings(common)?;
    let loaded = io::load_correspondences(input)?;
    warn_all(input, &loaded.warnings);
    let options = SolverOptions {
        scale: if fix_scale { ScaleMode::Fixed(1.0) } else { ScaleMode::Free },
    };
    let text = if robust {
        let config = raypose::robust::RobustConfig {
            solver: options,
            ..s.merge.robust
        };
        match ransac_gdls(&loaded.value, &config, common.seed)? {
            RobustOutcome::Success(r) => io::to_json(&RobustRecord::from(&r)),
            RobustOutcome::Failure {
                iterations_run,
                best_inlier_count,
            } => {
                return Err(Failure::Estimation(format!(
                    "no model with {} inliers (best {best_inlier_count}) after {iterations_run} iterations",
                    config.min_inliers
                )))
            }
        }
    } else {
        let report = gdls_solve_with(&loaded.value, &options)?;
        log::info!("solved in {:?}", report.elapsed);
        io::to_json(&SolveRecord::from(&report))
    };
    emit(common.out.as_deref(), &text)
}

#[derive(Serialize)]
struct AlignRecord {
    /// Maps the base frame into the other reconstruction's frame.
    base_to_other: RobustRecord,
    other_to_base: TransformRecord,
}

fn align(base: &Path, other: &Path, common: &Common) -> Outcome {
    let s = settings(common)?;
    let a = io::load_reconstruction(base)?;
    warn_all(base, &a.warnings);
    let b = io::load_reconstruction(other)?;
    warn_all(other, &b.warnings);
    let r = pipeline::localize(&a.value, &b.value, &s.merge, common.seed)?;
    let record = AlignRecord {
        other_to_base: (&r.transform.inverse()).into(),
        base_to_other: (&r).into(),
    };
    emit(common.out.as_deref(), &io::to_json(&record))
}

fn merge(inputs: &[PathBuf], report_path: Option<&Path>, max_group_size: Option<usize>, common: &Common) -> Outcome {
    let mut s = settings(common)?;
    if let Some(g) = max_group_size {
        s.merge.max_group_size = g;
    }
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("merge needs --out".into()))?;
    let subsets = inputs
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let loaded = io::load_reconstruction(path)?;
            warn_all(path, &loaded.warnings);
            Ok(Subset {
                id: i as u64,
                camera: loaded.value,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut report = pipeline::hierarchical_merge(&subsets, &s.merge)?;
    if s.refine {
        report = pipeline::refine_similarities(&report, &subsets)?;
    }
    io::save_reconstruction(out, &report.final_camera)?;
    let report_path = report_path.map(Path::to_path_buf).unwrap_or_else(|| sidecar(out, ".report.json"));
    let mut record = serde_json::to_value(MergeRecord::from(&report)).expect("serializable report");
    record["inputs"] = json!(inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    emit(Some(&report_path), &io::to_json(&record))?;
    if report.failed_members.is_empty() {
        Ok(())
    } else {
        Err(Failure::Estimation(format!(
            "{} of {} reconstructions could not be merged",
            report.failed_members.len(),
            subsets.len()
        )))
    }
}

fn write_bench(rows: &[BenchRow], focal_px: f64, extra: serde_json::Value, common: &Common) -> Outcome {
    emit(common.out.as_deref(), &bench::to_csv(rows, false))?;
    let meta = json!({
        "seed": common.seed,
        "focal_px": focal_px,
        "rows": rows.iter().map(|r| json!({
            "experiment": r.experiment,
            "method": r.method.name(),
            "n": r.n,
            "noise_px": r.noise_px,
            "runtime_s_mean": r.runtime_s_mean,
            "trials": r.trials,
            "failures": r.failures,
        })).collect::<Vec<_>>(),
        "details": extra,
    });
    let text = io::to_json(&meta);
    match common.out.as_deref() {
        Some(out) => emit(Some(&sidecar(out, ".meta.json")), &text),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn stability_details(s: &StabilitySummary) -> serde_json::Value {
    json!({
        "trials": s.trials,
        "failures": s.failures,
        "histograms": s.histograms.iter().map(|h| json!({
            "metric": h.metric,
            "fraction_below_1e-12": h.fraction_below[0],
            "fraction_below_1e-9": h.fraction_below[1],
            "fraction_below_1e-6": h.fraction_below[2],
            "bins": h.bins.iter().map(|(edge, count)| json!([if edge.is_finite() { json!(edge) } else { json!("-inf") }, count])).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    })
}

fn run_bench(experiment: Experiment, trials: Option<usize>, common: &Common) -> Outcome {
    let mut s = settings(common)?;
    if let Some(t) = trials {
        s.stability_trials = t;
    }
    match experiment {
        Experiment::Noise => write_bench(&bench::run_noise_sweep(&s.noise)?, s.noise.focal_px, json!(null), common),
        Experiment::Scalability => {
            write_bench(&bench::run_scalability(&s.scalability)?, s.scalability.focal_px, json!(null), common)
        }
        Experiment::Stability => {
            let summary = bench::run_stability(s.stability_trials, common.seed)?;
            write_bench(std::slice::from_ref(&summary.row), bench::DEFAULT_FOCAL_PX, stability_details(&summary), common)
        }
        Experiment::City => {
            let outcome = bench::run_city(&s.city, &s.merge, s.refine)?;
            let details = json!({
                "localized_subsets": outcome.localized_subsets,
                "median_position_error": outcome.median_position_error,
                "max_position_error": outcome.max_position_error,
                "failed_members": outcome.report.failed_members,
            });
            write_bench(std::slice::from_ref(&outcome.row), s.city.focal_px, details, common)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Solve {
            input,
            fix_scale,
            robust,
            common,
        } => solve(input, *fix_scale, *robust, common),
        Command::Align { base, other, common } => align(base, other, common),
        Command::Merge {
            inputs,
            report,
            max_group_size,
            common,
        } => merge(inputs, report.as_deref(), *max_group_size, common),
        Command::Bench { experiment, common } => run_bench(*experiment, None, common),
        Command::Stability { trials, common } => run_bench(Experiment::Stability, *trials, common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Estimation(msg)) => {
            eprintln!("estimation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
