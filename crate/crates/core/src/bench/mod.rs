//! Synthetic scenes and the accuracy/stability/scalability experiments.
//!
//! Every trial draws from its own ChaCha stream selected by `(seed, trial
//! index)`, so results do not depend on scheduling. Trials run in parallel and
//! are reduced in index order.

mod city;

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use city::{generate_city, generate_city_with, run_city, City, CityConfig, CityOutcome};

use crate::error::{Error, Result};
use crate::geometry::{Correspondence, Quaternion, Ray, SimilarityTransform};
use crate::solver::gdls_solve;
use crate::umeyama::umeyama_align;

/// Nominal focal length used to turn pixel noise into ray-angle noise.
pub const DEFAULT_FOCAL_PX: f64 = 800.0;

pub const CSV_HEADER: &str =
    "experiment,method,n,noise_px,rot_err_deg_mean,trans_err_mean,scale_err_rel_mean,runtime_s_mean,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub n_correspondences: usize,
    pub camera_cube_half_extent: f64,
    /// Points are drawn in `[-xy, xy]² x [z0, z1]`.
    pub point_box_xy: f64,
    pub point_box_z: (f64, f64),
    pub noise_px_sigma: f64,
    pub focal_px: f64,
    /// Per-axis rotation range, degrees.
    pub rotation_range_deg: f64,
    pub translation_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Use the identity as ground truth instead of drawing one.
    pub identity_transform: bool,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_correspondences: 6,
            camera_cube_half_extent: 1.0,
            point_box_xy: 1.0,
            point_box_z: (2.0, 4.0),
            noise_px_sigma: 0.0,
            focal_px: DEFAULT_FOCAL_PX,
            rotation_range_deg: 30.0,
            translation_range: (0.5, 10.0),
            scale_range: (0.1, 10.0),
            identity_transform: false,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.n_correspondences == 0 {
            return Err(Error::InvalidInput("n_correspondences must be positive".into()));
        }
        if !(self.noise_px_sigma >= 0.0) || !(self.focal_px > 0.0) {
            return Err(Error::InvalidInput("noise must be non-negative and focal positive".into()));
        }
        if !(self.camera_cube_half_extent > 0.0) || !(self.point_box_xy > 0.0) || !ordered(self.point_box_z) {
            return Err(Error::InvalidInput("invalid scene extents".into()));
        }
        if !ordered(self.translation_range) || !ordered(self.scale_range) || !(self.scale_range.0 > 0.0) {
            return Err(Error::InvalidInput("invalid transform ranges".into()));
        }
        if !(self.rotation_range_deg >= 0.0) {
            return Err(Error::InvalidInput("invalid rotation range".into()));
        }
        Ok(())
    }
}

/// Independent stream for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Uniform rotation, translation distance in `[0.5, 10]`, scale in `[0.1, 10]`.
pub(crate) fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform<f64> {
    let q = loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(q) = Quaternion::from_array(v) {
            break q;
        }
    };
    let t = random_direction(rng) * rng.random_range(0.5..10.0);
    SimilarityTransform::new(q, t, rng.random_range(0.1..10.0)).unwrap()
}

fn ranged_similarity(rng: &mut ChaCha8Rng, config: &SceneConfig) -> SimilarityTransform<f64> {
    if config.identity_transform {
        return SimilarityTransform::identity();
    }
    let r = config.rotation_range_deg.to_radians();
    let mut q = Quaternion::identity();
    for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
        let angle = uniform_in(rng, (-r, r));
        q = Quaternion::from_axis_angle(&axis, angle).unwrap().mul(&q);
    }
    let t = random_direction(rng) * uniform_in(rng, config.translation_range);
    SimilarityTransform::new(q, t, uniform_in(rng, config.scale_range)).unwrap()
}

/// Adds independent Gaussian offsets of standard deviation `sigma` (radians)
/// along two tangent directions of `d`, then renormalizes.
pub(crate) fn perturb_direction(rng: &mut ChaCha8Rng, d: &Vector3<f64>, sigma: f64) -> Vector3<f64> {
    let ea: f64 = StandardNormal.sample(rng);
    let eb: f64 = StandardNormal.sample(rng);
    if sigma == 0.0 {
        return *d;
    }
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = d.cross(&helper).normalize();
    let b = d.cross(&a);
    (d + a * (ea * sigma) + b * (eb * sigma)).normalize()
}

/// Rays from origins in the camera cube to points in the point box, all in the
/// local frame; world points are the local ones mapped through the inverse of
/// the world-to-local ground truth.
pub fn generate_scene(config: &SceneConfig) -> Result<(Vec<Correspondence<f64>>, SimilarityTransform<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = ranged_similarity(&mut rng, config);
    let to_world = truth.inverse();
    let h = config.camera_cube_half_extent;
    let xy = config.point_box_xy;
    let mut cs = Vec::with_capacity(config.n_correspondences);
    for _ in 0..config.n_correspondences {
        let origin = Vector3::from_fn(|_, _| rng.random_range(-h..h));
        let local = Vector3::new(
            rng.random_range(-xy..xy),
            rng.random_range(-xy..xy),
            uniform_in(&mut rng, config.point_box_z),
        );
        cs.push(Correspondence::new(Ray::through(origin, &local)?, to_world.apply(&local))?);
    }
    let noise_seed = rng.random();
    Ok((add_noise(&cs, config.noise_px_sigma, config.focal_px, noise_seed), truth))
}

/// Perturbs every direction by `sigma_px / focal_px` radians per tangent axis.
/// The underlying draws depend only on `seed`, so the same seed at different
/// `sigma_px` gives proportionally scaled perturbations.
pub fn add_noise(
    correspondences: &[Correspondence<f64>],
    sigma_px: f64,
    focal_px: f64,
    seed: u64,
) -> Vec<Correspondence<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = sigma_px / focal_px;
    correspondences
        .iter()
        .map(|c| Correspondence {
            ray: Ray {
                origin: c.ray.origin,
                direction: perturb_direction(&mut rng, &c.ray.direction, sigma),
            },
            ..*c
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub rotation_error_deg: f64,
    pub translation_error: f64,
    pub relative_scale_error: f64,
    pub runtime_seconds: f64,
}

impl TrialResult {
    pub fn compare(
        estimate: &SimilarityTransform<f64>,
        truth: &SimilarityTransform<f64>,
        runtime_seconds: f64,
    ) -> Self {
        Self {
            rotation_error_deg: estimate.rotation.angle_to(&truth.rotation).to_degrees(),
            translation_error: (estimate.translation - truth.translation).norm(),
            relative_scale_error: (estimate.scale - truth.scale).abs() / truth.scale,
            runtime_seconds,
        }
    }

    pub fn errors(&self) -> [f64; 3] {
        [self.rotation_error_deg, self.translation_error, self.relative_scale_error]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gdls,
    Umeyama,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gdls => "gdls+++",
            Method::Umeyama => "umeyama",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gdls+++" | "gdls" => Ok(Method::Gdls),
            "umeyama" => Ok(Method::Umeyama),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Aggregate over the trials of one (configuration, method) point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub experiment: String,
    pub method: Method,
    pub n: usize,
    pub noise_px: f64,
    pub rot_err_deg_mean: f64,
    pub trans_err_mean: f64,
    pub scale_err_rel_mean: f64,
    pub runtime_s_mean: f64,
    pub seed: u64,
    pub trials: usize,
    /// Trials where the method produced no estimate; excluded from the means.
    pub failures: usize,
}

fn aggregate(experiment: &str, method: Method, n: usize, noise_px: f64, seed: u64, results: &[Option<TrialResult>]) -> BenchRow {
    let ok: Vec<&TrialResult> = results.iter().flatten().collect();
    let mean = |f: fn(&TrialResult) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    BenchRow {
        experiment: experiment.into(),
        method,
        n,
        noise_px,
        rot_err_deg_mean: mean(|r| r.rotation_error_deg),
        trans_err_mean: mean(|r| r.translation_error),
        scale_err_rel_mean: mean(|r| r.relative_scale_error),
        runtime_s_mean: mean(|r| r.runtime_seconds),
        seed,
        trials: results.len(),
        failures: results.len() - ok.len(),
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with [`CSV_HEADER`]. Runtimes are machine dependent, so unless
/// `with_runtime` is set the runtime column is left empty to keep the output
/// reproducible byte for byte.
pub fn to_csv(rows: &[BenchRow], with_runtime: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let runtime = if with_runtime { fmt_float(r.runtime_s_mean) } else { String::new() };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.method.name(),
            r.n,
            fmt_float(r.noise_px),
            fmt_float(r.rot_err_deg_mean),
            fmt_float(r.trans_err_mean),
            fmt_float(r.scale_err_rel_mean),
            runtime,
            r.seed
        )
        .unwrap();
    }
    out
}

fn solve_trial(cs: &[Correspondence<f64>], truth: &SimilarityTransform<f64>) -> Option<TrialResult> {
    let report = gdls_solve(cs).ok()?;
    Some(TrialResult::compare(
        &report.best().transform,
        truth,
        report.elapsed.as_secs_f64(),
    ))
}

pub const STABILITY_THRESHOLDS: [f64; 3] = [1e-12, 1e-9, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistogram {
    pub metric: &'static str,
    /// `(lower log10 edge, count)`. The first bin also holds exact zeros; the
    /// last one holds everything from 100 up, failures included.
    pub bins: Vec<(f64, usize)>,
    /// Fraction of trials below each of [`STABILITY_THRESHOLDS`].
    pub fraction_below: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub trials: usize,
    pub failures: usize,
    pub histograms: [ErrorHistogram; 3],
    pub row: BenchRow,
}

const HISTOGRAM_LOW: i32 = -18;
const HISTOGRAM_HIGH: i32 = 2;

fn histogram(metric: &'static str, errors: &[f64]) -> ErrorHistogram {
    let mut bins: Vec<(f64, usize)> = (HISTOGRAM_LOW..HISTOGRAM_HIGH).map(|e| (e as f64, 0)).collect();
    bins[0].0 = f64::NEG_INFINITY;
    bins.push((HISTOGRAM_HIGH as f64, 0));
    for &e in errors {
        let slot = if !e.is_finite() {
            bins.len() - 1
        } else if e <= 0.0 {
            0
        } else {
            let k = e.log10().floor() as i32;
            (k.clamp(HISTOGRAM_LOW, HISTOGRAM_HIGH) - HISTOGRAM_LOW) as usize
        };
        bins[slot].1 += 1;
    }
    let fraction_below = STABILITY_THRESHOLDS.map(|t| errors.iter().filter(|&&e| e < t).count() as f64 / errors.len() as f64);
    ErrorHistogram {
        metric,
        bins,
        fraction_below,
    }
}

/// Minimal (n = 4) noise-free trials with identity ground truth.
pub fn run_stability(trials: usize, seed: u64) -> Result<StabilitySummary> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let results: Vec<Option<TrialResult>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let config = SceneConfig {
                n_correspondences: 4,
                identity_transform: true,
                seed: trial_rng(seed, i).random(),
                ..SceneConfig::default()
            };
            let (cs, truth) = generate_scene(&config).ok()?;
            solve_trial(&cs, &truth)
        })
        .collect();
    let per_metric = |k: usize| -> Vec<f64> {
        results
            .iter()
            .map(|r| r.map_or(f64::INFINITY, |r| r.errors()[k]))
            .collect()
    };
    Ok(StabilitySummary {
        trials,
        failures: results.iter().filter(|r| r.is_none()).count(),
        histograms: [
            histogram("rotation_deg", &per_metric(0)),
            histogram("translation", &per_metric(1)),
            histogram("scale_rel", &per_metric(2)),
        ],
        row: aggregate("stability", Method::Gdls, 4, 0.0, seed, &results),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweepConfig {
    pub levels: Vec<f64>,
    pub trials_per_level: usize,
    /// Points per trial; each is seen by two rays.
    pub n_points: usize,
    pub methods: Vec<Method>,
    pub focal_px: f64,
    pub seed: u64,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            levels: (0..=10).map(f64::from).collect(),
            trials_per_level: 1000,
            n_points: 6,
            methods: vec![Method::Gdls, Method::Umeyama],
            focal_px: DEFAULT_FOCAL_PX,
            seed: 0,
        }
    }
}

/// Closest point between two rays (midpoint of the common perpendicular).
pub fn triangulate_midpoint(a: &Ray<f64>, b: &Ray<f64>) -> Option<Vector3<f64>> {
    let w = a.origin - b.origin;
    let k = a.direction.dot(&b.direction);
    let denom = 1.0 - k * k;
    if denom <= 1e-12 {
        return None;
    }
    let d = a.direction.dot(&w);
    let e = b.direction.dot(&w);
    let la = (k * e - d) / denom;
    let lb = (e - k * d) / denom;
    Some(((a.origin + a.direction * la) + (b.origin + b.direction * lb)) * 0.5)
}

struct SweepTrial {
    primary: Vec<Correspondence<f64>>,
    auxiliary: Vec<Correspondence<f64>>,
    truth: SimilarityTransform<f64>,
    noise_seed: u64,
}

/// Scene shared by all noise levels and methods of one trial: every point has
/// its primary ray and a second ray from another origin in the camera cube.
fn sweep_trial(seed: u64, index: u64, n_points: usize) -> Result<SweepTrial> {
    let mut rng = trial_rng(seed, index);
    let config = SceneConfig {
        n_correspondences: n_points,
        seed: rng.random(),
        ..SceneConfig::default()
    };
    let (primary, truth) = generate_scene(&config)?;
    let auxiliary = primary
        .iter()
        .map(|c| {
            let origin = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            Correspondence::new(Ray::through(origin, &truth.apply(&c.point))?, c.point)
        })
        .collect::<Result<_>>()?;
    Ok(SweepTrial {
        primary,
        auxiliary,
        truth,
        noise_seed: rng.random(),
    })
}

fn umeyama_trial(
    primary: &[Correspondence<f64>],
    auxiliary: &[Correspondence<f64>],
    truth: &SimilarityTransform<f64>,
) -> Option<TrialResult> {
    let start = Instant::now();
    let local: Vec<Vector3<f64>> = primary
        .iter()
        .zip(auxiliary)
        .map(|(a, b)| triangulate_midpoint(&a.ray, &b.ray))
        .collect::<Option<_>>()?;
    let world: Vec<Vector3<f64>> = primary.iter().map(|c| c.point).collect();
    let estimate = umeyama_align(&world, &local).ok()?;
    Some(TrialResult::compare(&estimate, truth, start.elapsed().as_secs_f64()))
}

/// Mean errors per (noise level, method). Each trial keeps its scene and its
/// underlying noise draws across levels, only the noise scale changes.
pub fn run_noise_sweep(config: &NoiseSweepConfig) -> Result<Vec<BenchRow>> {
    if config.trials_per_level == 0 || config.n_points < 4 || config.methods.is_empty() {
        return Err(Error::InvalidInput("noise sweep needs trials, at least 4 points and a method".into()));
    }
    if config.levels.iter().any(|l| !(*l >= 0.0)) || !(config.focal_px > 0.0) {
        return Err(Error::InvalidInput("noise levels must be non-negative and focal positive".into()));
    }
    let trials: Vec<SweepTrial> = (0..config.trials_per_level as u64)
        .into_par_iter()
        .map(|i| sweep_trial(config.seed, i, config.n_points))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &level in &config.levels {
        let per_trial: Vec<Vec<Option<TrialResult>>> = trials
            .par_iter()
            .map(|t| {
                let both: Vec<Correspondence<f64>> = t.primary.iter().chain(&t.auxiliary).copied().collect();
                let noisy = add_noise(&both, level, config.focal_px, t.noise_seed);
                let (primary, auxiliary) = noisy.split_at(t.primary.len());
                config
                    .methods
                    .iter()
                    .map(|m| match m {
                        Method::Gdls => solve_trial(&noisy, &t.truth),
                        Method::Umeyama => umeyama_trial(primary, auxiliary, &t.truth),
                    })
                    .collect()
            })
            .collect();
        for (k, &method) in config.methods.iter().enumerate() {
            let results: Vec<Option<TrialResult>> = per_trial.iter().map(|r| r[k]).collect();
            rows.push(aggregate("noise", method, config.n_points, level, config.seed, &results));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityConfig {
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub noise_px: f64,
    pub focal_px: f64,
    pub seed: u64,
}

impl Default for ScalabilityConfig {
    fn default() -> Self {
        Self {
            n_values: vec![4, 10, 50, 100, 500, 1000],
            trials: 1000,
            noise_px: 0.5,
            focal_px: DEFAULT_FOCAL_PX,
            seed: 0,
        }
    }
}

/// gDLS+++ error and runtime as the number of correspondences grows.
pub fn run_scalability(config: &ScalabilityConfig) -> Result<Vec<BenchRow>> {
    if config.trials == 0 || config.n_values.iter().any(|&n| n < 4) {
        return Err(Error::InvalidInput("scalability needs trials and n >= 4".into()));
    }
    let mut rows = Vec::new();
    for &n in &config.n_values {
        let results: Vec<Option<TrialResult>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|i| {
                let scene = SceneConfig {
                    n_correspondences: n,
                    noise_px_sigma: config.noise_px,
                    focal_px: config.focal_px,
                    seed: trial_rng(config.seed, i).random(),
                    ..SceneConfig::default()
                };
                let (cs, truth) = generate_scene(&scene).ok()?;
                solve_trial(&cs, &truth)
            })
            .collect();
        rows.push(aggregate("scalability", Method::Gdls, n, config.noise_px, config.seed, &results));
    }
    Ok(rows)
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
