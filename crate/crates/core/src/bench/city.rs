//! Synthetic "city": a street of overlapping reconstructions, each in its own
//! randomly perturbed frame.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{perturb_direction, random_similarity, BenchRow, Method, DEFAULT_FOCAL_PX};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, DistributedCamera, Observation, ScenePoint, SimilarityTransform};
use crate::pipeline::{hierarchical_merge, refine_similarities, MergeConfig, MergeReport, Subset, MIN_EDGE_WEIGHT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityConfig {
    pub n_subsets: usize,
    pub cameras_per_subset: usize,
    /// Points private to each subset.
    pub points_per_subset: usize,
    /// Points shared with each street neighbour, as a fraction of `points_per_subset`.
    pub overlap_fraction: f64,
    /// Cameras of a subset observing each of its points.
    pub observations_per_point: usize,
    pub noise_px: f64,
    pub focal_px: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            n_subsets: 10,
            cameras_per_subset: 50,
            points_per_subset: 200,
            overlap_fraction: 0.3,
            observations_per_point: 4,
            noise_px: 0.5,
            focal_px: DEFAULT_FOCAL_PX,
            seed: 0,
        }
    }
}

impl CityConfig {
    pub fn shared_points(&self) -> usize {
        (self.overlap_fraction * self.points_per_subset as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct City {
    pub subsets: Vec<Subset>,
    /// Maps the ground-truth frame into each subset's frame.
    pub world_to_subset: BTreeMap<u64, SimilarityTransform<f64>>,
    pub true_centers: BTreeMap<u64, Vector3<f64>>,
    pub true_points: BTreeMap<u64, Vector3<f64>>,
    /// Subset pairs that share points by construction.
    pub overlap_pairs: Vec<(u64, u64)>,
}

pub fn generate_city(
    n_subsets: usize,
    cameras_per_subset: usize,
    overlap_fraction: f64,
    noise_px: f64,
    seed: u64,
) -> Result<City> {
    generate_city_with(&CityConfig {
        n_subsets,
        cameras_per_subset,
        overlap_fraction,
        noise_px,
        seed,
        ..CityConfig::default()
    })
}

/// Subset `i` has cameras in `[2i-1, 2i+1] x [-1,1]²` and points in
/// `[2i-2, 2i+2] x [-1,1] x [2,4]`; points shared by neighbours lie in
/// the overlap of their boxes.
pub fn generate_city_with(config: &CityConfig) -> Result<City> {
    if !(config.overlap_fraction > 0.0 && config.overlap_fraction < 1.0) {
        return Err(Error::InvalidInput("overlap_fraction must lie in (0, 1)".into()));
    }
    if config.n_subsets == 0 || config.cameras_per_subset == 0 {
        return Err(Error::InvalidInput("city needs at least one subset and one camera".into()));
    }
    if config.observations_per_point == 0 || config.observations_per_point > config.cameras_per_subset {
        return Err(Error::InvalidInput(
            "observations_per_point must lie in [1, cameras_per_subset]".into(),
        ));
    }
    if !(config.noise_px >= 0.0) || !(config.focal_px > 0.0) {
        return Err(Error::InvalidInput("noise must be non-negative and focal positive".into()));
    }
    let shared = config.shared_points();
    if config.n_subsets > 1 && shared < MIN_EDGE_WEIGHT {
        return Err(Error::InvalidInput(format!(
            "{shared} shared points between neighbours, need at least {MIN_EDGE_WEIGHT}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut true_points = BTreeMap::new();
    let mut next_point = 0u64;
    let mut point_box = |rng: &mut ChaCha8Rng, x0: f64, x1: f64, count: usize| -> Vec<u64> {
        (0..count)
            .map(|_| {
                let p = Vector3::new(rng.random_range(x0..x1), rng.random_range(-1.0..1.0), rng.random_range(2.0..4.0));
                let id = next_point;
                next_point += 1;
                true_points.insert(id, p);
                id
            })
            .collect()
    };
    let mut members: Vec<Vec<u64>> = (0..config.n_subsets)
        .map(|i| {
            let x = 2.0 * i as f64;
            point_box(&mut rng, x - 2.0, x + 2.0, config.points_per_subset)
        })
        .collect();
    let mut overlap_pairs = Vec::new();
    for i in 0..config.n_subsets.saturating_sub(1) {
        let x = 2.0 * i as f64;
        let ids = point_box(&mut rng, x, x + 2.0, shared);
        members[i].extend(&ids);
        members[i + 1].extend(&ids);
        overlap_pairs.push((i as u64, i as u64 + 1));
    }

    let mut true_centers = BTreeMap::new();
    let mut world_to_subset = BTreeMap::new();
    let mut subsets = Vec::with_capacity(config.n_subsets);
    for (i, point_ids) in members.iter().enumerate() {
        let g = random_similarity(&mut rng);
        let x = 2.0 * i as f64;
        let centers: Vec<(u64, Vector3<f64>)> = (0..config.cameras_per_subset)
            .map(|j| {
                let id = (i * config.cameras_per_subset + j) as u64;
                let c = Vector3::new(rng.random_range(x - 1.0..x + 1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                true_centers.insert(id, c);
                (id, c)
            })
            .collect();
        let cameras = centers
            .iter()
            .map(|&(id, c)| CameraPose {
                id,
                center: g.apply(&c),
                orientation: g.rotation,
            })
            .collect();
        let points = point_ids
            .iter()
            .map(|&id| ScenePoint {
                id,
                position: g.apply(&true_points[&id]),
            })
            .collect();
        let mut observations = Vec::new();
        for &pid in point_ids {
            for j in index::sample(&mut rng, config.cameras_per_subset, config.observations_per_point) {
                let (cid, c) = centers[j];
                let d = (true_points[&pid] - c).normalize();
                let d = perturb_direction(&mut rng, &d, config.noise_px / config.focal_px);
                observations.push(Observation {
                    camera_id: cid,
                    point_id: pid,
                    direction: g.apply_direction(&d),
                });
            }
        }
        world_to_subset.insert(i as u64, g);
        subsets.push(Subset {
            id: i as u64,
            camera: DistributedCamera::new(cameras, points, observations)?,
        });
    }
    Ok(City {
        subsets,
        world_to_subset,
        true_centers,
        true_points,
        overlap_pairs,
    })
}

impl City {
    /// Similarity taking subset `id`'s frame into subset `root`'s frame.
    pub fn true_relative(&self, id: u64, root: u64) -> SimilarityTransform<f64> {
        self.world_to_subset[&root].compose(&self.world_to_subset[&id].inverse())
    }

    /// Distance of every merged camera from its true position, measured in
    /// the ground-truth frame.
    pub fn position_errors(&self, report: &MergeReport) -> Vec<f64> {
        let to_truth = self.world_to_subset[&report.final_id].inverse();
        report
            .final_camera
            .cameras()
            .iter()
            .map(|c| (to_truth.apply(&c.center) - self.true_centers[&c.id]).norm())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CityOutcome {
    pub report: MergeReport,
    pub localized_subsets: usize,
    pub median_position_error: f64,
    pub max_position_error: f64,
    pub row: BenchRow,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Generates a city, merges it and scores the result. The row reports mean
/// rotation, translation and relative scale error of the recovered per-subset
/// similarities and the merge wall time; `n` is the number of cameras.
pub fn run_city(city_config: &CityConfig, merge_config: &MergeConfig, refine: bool) -> Result<CityOutcome> {
    let city = generate_city_with(city_config)?;
    let start = std::time::Instant::now();
    let mut report = hierarchical_merge(&city.subsets, merge_config)?;
    if refine {
        report = refine_similarities(&report, &city.subsets)?;
    }
    let runtime = start.elapsed().as_secs_f64();
    let results: Vec<Option<super::TrialResult>> = city
        .subsets
        .iter()
        .map(|s| {
            let t = report.transform_log.get(&s.id)?;
            let truth = city.true_relative(s.id, report.final_id);
            Some(super::TrialResult::compare(t, &truth, runtime))
        })
        .collect();
    let errors = city.position_errors(&report);
    let max_position_error = errors.iter().copied().fold(0.0, f64::max);
    let mut row = super::aggregate(
        "city",
        Method::Gdls,
        city_config.n_subsets * city_config.cameras_per_subset,
        city_config.noise_px,
        city_config.seed,
        &results,
    );
    row.runtime_s_mean = runtime;
    Ok(CityOutcome {
        localized_subsets: report.transform_log.len(),
        median_position_error: median(errors),
        max_position_error,
        report,
        row,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::build_match_graph;

    #[test]
    fn zero_overlap_is_invalid() {
        assert!(matches!(generate_city(3, 5, 0.0, 0.0, 1), Err(Error::InvalidInput(_))));
        assert!(matches!(
            generate_city_with(&CityConfig {
                points_per_subset: 10,
                overlap_fraction: 0.2,
                ..CityConfig::default()
            }),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn graph_matches_overlap_plan() {
        let city = generate_city(10, 5, 0.3, 0.0, 2).unwrap();
        let g = build_match_graph(&city.subsets);
        let edges: Vec<(u64, u64)> = g.edges.iter().map(|&(a, b, _)| (a, b)).collect();
        assert_eq!(edges, city.overlap_pairs);
    }

    #[test]
    fn overlap_statistics() {
        let config = CityConfig::default();
        let city = generate_city_with(&config).unwrap();
        for &(a, b) in &city.overlap_pairs {
            let pa = city.subsets[a as usize].camera.point_ids();
            let pb = city.subsets[b as usize].camera.point_ids();
            let ratio = pa.intersection(&pb).count() as f64 / config.points_per_subset as f64;
            assert!((ratio - config.overlap_fraction).abs() <= 0.1 * config.overlap_fraction);
        }
    }

    #[test]
    fn densest_subset_is_interior() {
        let city = generate_city(4, 5, 0.3, 0.0, 3).unwrap();
        assert_eq!(crate::pipeline::select_base(&city.subsets), Some(1));
    }

    #[test]
    fn subsets_are_exact_when_noise_free() {
        let city = generate_city(2, 5, 0.3, 0.0, 4).unwrap();
        for s in &city.subsets {
            let g = city.world_to_subset[&s.id];
            let cams = s.camera.camera_map();
            let pts = s.camera.point_map();
            for o in s.camera.observations() {
                let v = (pts[&o.point_id] - cams[&o.camera_id].center).normalize();
                assert!((v - o.direction).norm() <= 1e-12);
            }
            for (id, c) in &cams {
                assert!((g.apply(&city.true_centers[id]) - c.center).norm() <= 1e-12 * (1.0 + c.center.norm()));
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_city(3, 5, 0.3, 1.0, 5).unwrap();
        let b = generate_city(3, 5, 0.3, 1.0, 5).unwrap();
        assert_eq!(a.subsets, b.subsets);
    }
}
