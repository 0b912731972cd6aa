//! Hypothesize-and-verify estimation around [`gdls_solve`](crate::solver::gdls_solve),
//! with uniform (RANSAC) or progressive (PROSAC) sampling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{reprojection_residual, Correspondence, SimilarityTransform};
use crate::solver::{gdls_solve_with, SolverOptions};

/// Growth horizon of the PROSAC schedule (number of samples after which it
/// degenerates to uniform sampling over all data).
const PROSAC_HORIZON: f64 = 200_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    /// Maximum angle between an observed ray and the predicted one, radians.
    pub angular_inlier_threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
    pub sample_size: usize,
    pub use_prosac: bool,
    pub solver: SolverOptions<f64>,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            angular_inlier_threshold: 8.7e-3,
            max_iterations: 1000,
            confidence: 0.99,
            min_inliers: 10,
            sample_size: 4,
            use_prosac: false,
            solver: SolverOptions::default(),
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_inlier_threshold > 0.0) || !self.angular_inlier_threshold.is_finite() {
            return Err(Error::InvalidInput("angular_inlier_threshold must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidInput("confidence must lie in (0, 1)".into()));
        }
        if self.sample_size < 4 {
            return Err(Error::InvalidInput("sample_size must be at least 4".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustResult {
    pub transform: SimilarityTransform<f64>,
    /// Ascending indices into the input correspondences.
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
    pub inlier_ratio: f64,
    /// Iteration (1-based) at which a hypothesis first reached `min_inliers`.
    pub first_success_iteration: Option<usize>,
}

/// Outcome of a robust estimate on valid input.
#[derive(Debug, Clone, PartialEq)]
pub enum RobustOutcome {
    Success(RobustResult),
    /// No hypothesis reached `min_inliers`.
    Failure {
        iterations_run: usize,
        best_inlier_count: usize,
    },
}

impl RobustOutcome {
    pub fn success(&self) -> Option<&RobustResult> {
        match self {
            RobustOutcome::Success(r) => Some(r),
            RobustOutcome::Failure { .. } => None,
        }
    }

    pub fn into_success(self) -> Option<RobustResult> {
        match self {
            RobustOutcome::Success(r) => Some(r),
            RobustOutcome::Failure { .. } => None,
        }
    }

    pub fn iterations_run(&self) -> usize {
        match self {
            RobustOutcome::Success(r) => r.iterations_run,
            RobustOutcome::Failure { iterations_run, .. } => *iterations_run,
        }
    }
}

/// Inliers of `transform` and their mean angular error.
#[derive(Debug, Clone, PartialEq)]
pub struct InlierScore {
    pub indices: Vec<usize>,
    pub mean_angle: f64,
}

impl InlierScore {
    fn better_than(&self, other: &InlierScore) -> bool {
        self.indices.len() > other.indices.len()
            || (self.indices.len() == other.indices.len() && self.mean_angle < other.mean_angle)
    }
}

pub fn score_inliers(
    transform: &SimilarityTransform<f64>,
    correspondences: &[Correspondence<f64>],
    threshold: f64,
) -> InlierScore {
    let mut indices = Vec::new();
    let mut total = 0.0;
    for (i, c) in correspondences.iter().enumerate() {
        let r = reprojection_residual(transform, c);
        if !r.degenerate && r.angle <= threshold {
            indices.push(i);
            total += r.angle;
        }
    }
    let mean_angle = if indices.is_empty() {
        f64::INFINITY
    } else {
        total / indices.len() as f64
    };
    InlierScore { indices, mean_angle }
}

/// Indices sorted by descending score, stable. Falls back to the identity
/// when fewer than half of the correspondences carry a score; unscored ones
/// go last.
pub fn prosac_order(correspondences: &[Correspondence<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..correspondences.len()).collect();
    let scored = correspondences.iter().filter(|c| c.score.is_some()).count();
    if 2 * scored < correspondences.len() {
        return order;
    }
    let key = |i: usize| correspondences[i].score.unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Progressive sampling schedule of Chum and Matas: minimal sets are drawn
/// from a prefix of the quality order that grows with the iteration count,
/// and always include the newest member of the prefix until it catches up.
pub struct ProsacSampler {
    m: usize,
    n_total: usize,
    n: usize,
    t_n: f64,
    t_n_prime: usize,
    t: usize,
}

impl ProsacSampler {
    pub fn new(sample_size: usize, n_total: usize) -> Self {
        let m = sample_size;
        let mut t_n = PROSAC_HORIZON;
        for i in 0..m {
            t_n *= (m - i) as f64 / (n_total - i) as f64;
        }
        Self {
            m,
            n_total,
            n: m,
            t_n,
            t_n_prime: 1,
            t: 0,
        }
    }

    /// Current prefix length.
    pub fn prefix(&self) -> usize {
        self.n
    }

    /// Positions into the quality order.
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        self.t += 1;
        if self.t == self.t_n_prime && self.n < self.n_total {
            let next = self.t_n * (self.n + 1) as f64 / (self.n + 1 - self.m) as f64;
            self.t_n_prime += (next - self.t_n).ceil().max(1.0) as usize;
            self.t_n = next;
            self.n += 1;
        }
        if self.t_n_prime < self.t || self.n == self.m {
            index::sample(rng, self.n, self.m).into_vec()
        } else {
            let mut s = index::sample(rng, self.n - 1, self.m - 1).into_vec();
            s.push(self.n - 1);
            s
        }
    }
}

/// Iterations needed to draw one all-inlier sample with the given confidence.
fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> f64 {
    let p_good = inlier_ratio.powi(sample_size as i32);
    if p_good >= 1.0 {
        return 0.0;
    }
    if p_good <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - confidence).ln() / (1.0 - p_good).ln()
}

/// Best candidate of a solve on `subset`, scored against all correspondences.
fn best_hypothesis(
    subset: &[Correspondence<f64>],
    all: &[Correspondence<f64>],
    config: &RobustConfig,
) -> Option<(SimilarityTransform<f64>, InlierScore)> {
    let report = gdls_solve_with(subset, &config.solver).ok()?;
    let mut best: Option<(SimilarityTransform<f64>, InlierScore)> = None;
    for cand in &report.candidates {
        let score = score_inliers(&cand.transform, all, config.angular_inlier_threshold);
        if best.as_ref().is_none_or(|(_, b)| score.better_than(b)) {
            best = Some((cand.transform, score));
        }
    }
    best
}

/// Robust world-to-local similarity. The result is a pure function of
/// `(correspondences, config, seed)`.
pub fn ransac_gdls(
    correspondences: &[Correspondence<f64>],
    config: &RobustConfig,
    seed: u64,
) -> Result<RobustOutcome> {
    config.validate()?;
    let n = correspondences.len();
    if n < config.sample_size {
        return Err(Error::InvalidInput(format!(
            "{} correspondences, need at least {}",
            n, config.sample_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if config.use_prosac {
        prosac_order(correspondences)
    } else {
        (0..n).collect()
    };
    let mut prosac = ProsacSampler::new(config.sample_size, n);

    let mut best: Option<(SimilarityTransform<f64>, InlierScore)> = None;
    let mut first_success = None;
    let mut iterations = 0;
    let mut needed = f64::INFINITY;
    let mut subset = Vec::with_capacity(config.sample_size);
    while iterations < config.max_iterations && (iterations as f64) < needed {
        iterations += 1;
        let positions = if config.use_prosac {
            prosac.sample(&mut rng)
        } else {
            index::sample(&mut rng, n, config.sample_size).into_vec()
        };
        subset.clear();
        subset.extend(positions.iter().map(|&p| correspondences[order[p]]));
        let Some((transform, score)) = best_hypothesis(&subset, correspondences, config) else {
            continue;
        };
        if score.indices.len() >= config.min_inliers && first_success.is_none() {
            first_success = Some(iterations);
        }
        if best.as_ref().is_none_or(|(_, b)| score.better_than(b)) {
            let ratio = score.indices.len() as f64 / n as f64;
            needed = required_iterations(ratio, config.sample_size, config.confidence);
            best = Some((transform, score));
        }
    }

    let Some((mut transform, mut score)) = best else {
        return Ok(RobustOutcome::Failure {
            iterations_run: iterations,
            best_inlier_count: 0,
        });
    };
    if score.indices.len() >= config.sample_size.max(4) {
        let inliers: Vec<_> = score.indices.iter().map(|&i| correspondences[i]).collect();
        if let Some((refit, refit_score)) = best_hypothesis(&inliers, correspondences, config) {
            if !score.better_than(&refit_score) {
                transform = refit;
                score = refit_score;
            }
        }
    }
    if score.indices.len() < config.min_inliers {
        return Ok(RobustOutcome::Failure {
            iterations_run: iterations,
            best_inlier_count: score.indices.len(),
        });
    }
    let inlier_ratio = score.indices.len() as f64 / n as f64;
    Ok(RobustOutcome::Success(RobustResult {
        transform,
        inlier_indices: score.indices,
        iterations_run: iterations,
        inlier_ratio,
        first_success_iteration: first_success,
    }))
}
