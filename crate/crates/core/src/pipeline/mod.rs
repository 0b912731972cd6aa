//! Hierarchical merging of reconstructions treated as distributed cameras.
//!
//! Each level partitions the current reconstructions by their match graph,
//! picks the one with the most points in every group as base, localizes the
//! others against it with robust gDLS+++, and merges the successes. Levels
//! repeat until one reconstruction remains or nothing more can be localized.

mod graph;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

pub use graph::{build_match_graph, fiedler_vector, partition, MatchGraph, DEFAULT_MAX_PARTITION_SIZE, MIN_EDGE_WEIGHT};

use crate::error::{Error, Result};
use crate::geometry::{
    merge_distributed_cameras, CameraPose, Correspondence, DistributedCamera, Observation, Ray, ScenePoint,
    SimilarityTransform,
};
use crate::robust::{ransac_gdls, RobustConfig, RobustOutcome, RobustResult};
use crate::solver::gdls_solve_with;

/// A reconstruction with its own frame, identified within a merge run.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub id: u64,
    pub camera: DistributedCamera<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    pub robust: RobustConfig,
    /// Distributed cameras per group at each level.
    pub max_group_size: usize,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            robust: RobustConfig::default(),
            max_group_size: 8,
            min_inlier_ratio: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub members: Vec<u64>,
    pub base: u64,
    /// Transforms map the growing base frame into the member's frame.
    pub localized: BTreeMap<u64, RobustResult>,
    pub unlocalized: BTreeMap<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelReport {
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub levels: Vec<LevelReport>,
    /// Input ids that could not be brought into the final frame.
    pub failed_members: BTreeMap<u64, String>,
    /// Input id whose frame is the final frame.
    pub final_id: u64,
    pub final_camera: DistributedCamera<f64>,
    /// Input id to the similarity mapping its frame into the final frame.
    pub transform_log: BTreeMap<u64, SimilarityTransform<f64>>,
    /// Input id whose coordinates each final point was taken from.
    pub point_owner: BTreeMap<u64, u64>,
    /// Total reduced cost before and after each refinement sweep.
    pub refine_costs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    id: u64,
    camera: DistributedCamera<f64>,
    to_node: BTreeMap<u64, SimilarityTransform<f64>>,
    point_owner: BTreeMap<u64, u64>,
    strikes: u32,
}

impl Node {
    fn leaf(s: &Subset) -> Self {
        Self {
            id: s.id,
            camera: s.camera.clone(),
            to_node: BTreeMap::from([(s.id, SimilarityTransform::identity())]),
            point_owner: s.camera.points().iter().map(|p| (p.id, s.id)).collect(),
            strikes: 0,
        }
    }
}

/// Id of the member with the most points, smallest id on ties.
pub fn select_base(group: &[Subset]) -> Option<u64> {
    group
        .iter()
        .max_by(|a, b| {
            a.camera
                .points()
                .len()
                .cmp(&b.camera.points().len())
                .then(b.id.cmp(&a.id))
        })
        .map(|s| s.id)
}

/// Ray-to-point correspondences of `other`'s observations against `base`'s
/// coordinates of the same point ids.
pub fn shared_correspondences(
    base: &DistributedCamera<f64>,
    other: &DistributedCamera<f64>,
) -> (Vec<Correspondence<f64>>, usize) {
    let points = base.point_map();
    let mut shared = BTreeSet::new();
    let cs = other
        .rays()
        .into_iter()
        .filter_map(|(pid, ray)| {
            let p = points.get(&pid)?;
            shared.insert(pid);
            Some(Correspondence {
                ray,
                point: *p,
                score: None,
                point_id: Some(pid),
            })
        })
        .collect();
    (cs, shared.len())
}

/// Robustly estimates the similarity from `base`'s frame into `other`'s.
pub fn localize(
    base: &DistributedCamera<f64>,
    other: &DistributedCamera<f64>,
    config: &MergeConfig,
    seed: u64,
) -> Result<RobustResult> {
    let (cs, shared) = shared_correspondences(base, other);
    if shared < MIN_EDGE_WEIGHT {
        return Err(Error::NotLocalizable(format!("{shared} shared points, need {MIN_EDGE_WEIGHT}")));
    }
    match ransac_gdls(&cs, &config.robust, seed)? {
        RobustOutcome::Success(r) if r.inlier_ratio >= config.min_inlier_ratio => Ok(r),
        RobustOutcome::Success(r) => Err(Error::NotLocalizable(format!(
            "inlier ratio {:.3} below {} ({} of {} correspondences)",
            r.inlier_ratio,
            config.min_inlier_ratio,
            r.inlier_indices.len(),
            cs.len()
        ))),
        RobustOutcome::Failure {
            iterations_run,
            best_inlier_count,
        } => Err(Error::NotLocalizable(format!(
            "robust estimation failed: best {best_inlier_count} inliers of {} after {iterations_run} iterations",
            cs.len()
        ))),
    }
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

struct GroupOutcome {
    report: GroupReport,
    merged: Node,
    rejected: Vec<Node>,
}

fn merge_group(members: Vec<Node>, config: &MergeConfig, level: usize) -> GroupOutcome {
    let member_ids: Vec<u64> = members.iter().map(|n| n.id).collect();
    let base_id = members
        .iter()
        .max_by(|a, b| {
            a.camera
                .points()
                .len()
                .cmp(&b.camera.points().len())
                .then(b.id.cmp(&a.id))
        })
        .map(|n| n.id)
        .unwrap();
    let mut remaining: Vec<Node> = Vec::new();
    let mut merged = None;
    for n in members {
        if n.id == base_id {
            merged = Some(n);
        } else {
            remaining.push(n);
        }
    }
    let mut merged = merged.unwrap();
    merged.strikes = 0;
    let mut localized = BTreeMap::new();
    let mut unlocalized = BTreeMap::new();
    let mut rejected = Vec::new();

    while !remaining.is_empty() {
        let points = merged.camera.point_ids();
        let (pick, shared) = remaining
            .iter()
            .enumerate()
            .map(|(i, n)| (i, n.camera.point_ids().intersection(&points).count()))
            .max_by(|a, b| a.1.cmp(&b.1).then(remaining[b.0].id.cmp(&remaining[a.0].id)))
            .unwrap();
        if shared < MIN_EDGE_WEIGHT {
            for n in remaining.drain(..) {
                unlocalized.insert(n.id, format!("no overlap with group base {base_id}"));
                rejected.push(n);
            }
            break;
        }
        let node = remaining.remove(pick);
        let seed = mix_seed(&[config.seed, level as u64, base_id, node.id]);
        let attempt = localize(&merged.camera, &node.camera, config, seed).and_then(|r| {
            let to_base = r.transform.inverse();
            let camera = merge_distributed_cameras(&merged.camera, &node.camera, &to_base)?;
            Ok((r, to_base, camera))
        });
        match attempt {
            Ok((r, to_base, camera)) => {
                let known = merged.camera.point_ids();
                for (pid, owner) in &node.point_owner {
                    if !known.contains(pid) {
                        merged.point_owner.insert(*pid, *owner);
                    }
                }
                for (input, t) in &node.to_node {
                    merged.to_node.insert(*input, to_base.compose(t));
                }
                merged.camera = camera;
                localized.insert(node.id, r);
            }
            Err(e) => {
                log::info!("level {level}: {} not localized against {base_id}: {e}", node.id);
                unlocalized.insert(node.id, e.to_string());
                rejected.push(node);
            }
        }
    }
    GroupOutcome {
        report: GroupReport {
            members: member_ids,
            base: base_id,
            localized,
            unlocalized,
        },
        merged,
        rejected,
    }
}

/// Merges `subsets` into as few frames as possible, returning the largest.
pub fn hierarchical_merge(subsets: &[Subset], config: &MergeConfig) -> Result<MergeReport> {
    if subsets.is_empty() {
        return Err(Error::InvalidInput("no reconstructions to merge".into()));
    }
    config.robust.validate()?;
    if config.max_group_size < 2 {
        return Err(Error::InvalidInput("max_group_size must be at least 2".into()));
    }
    let mut ids = BTreeSet::new();
    for s in subsets {
        if !ids.insert(s.id) {
            return Err(Error::InvalidInput(format!("duplicate reconstruction id {}", s.id)));
        }
    }

    let mut nodes: Vec<Node> = subsets.iter().map(Node::leaf).collect();
    nodes.sort_by_key(|n| n.id);
    let mut levels = Vec::new();
    let mut failed_members = BTreeMap::new();

    while nodes.len() > 1 {
        let level = levels.len();
        let views: Vec<Subset> = nodes
            .iter()
            .map(|n| Subset {
                id: n.id,
                camera: n.camera.clone(),
            })
            .collect();
        let groups = partition(&build_match_graph(&views), config.max_group_size);
        let mut by_id: BTreeMap<u64, Node> = nodes.drain(..).map(|n| (n.id, n)).collect();
        let grouped: Vec<Vec<Node>> = groups
            .iter()
            .map(|g| g.iter().map(|id| by_id.remove(id).unwrap()).collect())
            .collect();
        let outcomes: Vec<GroupOutcome> = grouped
            .into_par_iter()
            .map(|members| merge_group(members, config, level))
            .collect();

        let mut merges = 0;
        let mut removals = 0;
        let mut report = LevelReport::default();
        for out in outcomes {
            merges += out.report.localized.len();
            nodes.push(out.merged);
            for mut n in out.rejected {
                n.strikes += 1;
                if n.strikes >= 2 {
                    removals += 1;
                    let reason = &out.report.unlocalized[&n.id];
                    for input in n.to_node.keys() {
                        failed_members.insert(*input, format!("not localized after retry: {reason}"));
                    }
                } else {
                    nodes.push(n);
                }
            }
            report.groups.push(out.report);
        }
        nodes.sort_by_key(|n| n.id);
        levels.push(report);
        if merges == 0 && removals == 0 {
            break;
        }
    }

    let best = nodes
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.to_node
                .len()
                .cmp(&b.to_node.len())
                .then(a.camera.points().len().cmp(&b.camera.points().len()))
                .then(b.id.cmp(&a.id))
        })
        .map(|(i, _)| i)
        .unwrap();
    let final_node = nodes.swap_remove(best);
    for n in nodes {
        for input in n.to_node.keys() {
            failed_members.insert(*input, format!("left in a separate component rooted at {}", n.id));
        }
    }
    Ok(MergeReport {
        levels,
        failed_members,
        final_id: final_node.id,
        final_camera: final_node.camera,
        transform_log: final_node.to_node,
        point_owner: final_node.point_owner,
        refine_costs: Vec::new(),
    })
}

const MAX_REFINE_SWEEPS: usize = 10;
const REFINE_RELATIVE_TOLERANCE: f64 = 1e-10;

type PointMap = BTreeMap<u64, Vector3<f64>>;

/// Final-frame position of every point, averaged over the inputs holding it,
/// optionally leaving one input out.
fn averaged_cloud(
    local: &BTreeMap<u64, PointMap>,
    log: &BTreeMap<u64, SimilarityTransform<f64>>,
    skip: Option<u64>,
) -> PointMap {
    let mut sums: BTreeMap<u64, (Vector3<f64>, f64)> = BTreeMap::new();
    for (id, t) in log {
        if Some(*id) == skip {
            continue;
        }
        for (pid, p) in &local[id] {
            let e = sums.entry(*pid).or_insert((Vector3::zeros(), 0.0));
            e.0 += t.apply(p);
            e.1 += 1.0;
        }
    }
    sums.into_iter().map(|(pid, (sum, k))| (pid, sum / k)).collect()
}

/// Observation rays of each input on points held by at least two inputs.
fn shared_rays(
    by_id: &BTreeMap<u64, &Subset>,
    local: &BTreeMap<u64, PointMap>,
) -> BTreeMap<u64, Vec<(u64, Ray<f64>)>> {
    let mut holders: BTreeMap<u64, usize> = BTreeMap::new();
    for points in local.values() {
        for pid in points.keys() {
            *holders.entry(*pid).or_default() += 1;
        }
    }
    local
        .keys()
        .map(|id| {
            let rays = by_id[id]
                .camera
                .rays()
                .into_iter()
                .filter(|(pid, _)| holders.get(pid).is_some_and(|&k| k > 1))
                .collect();
            (*id, rays)
        })
        .collect()
}

/// `(R, t, s)` of `s c + alpha x = R X + t` for the final-to-input map.
fn constraint_form(to_final: &SimilarityTransform<f64>) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let w2l = to_final.inverse();
    let (t, s) = w2l.constraint_parameters();
    (w2l.rotation_matrix(), t, s)
}

fn projector(z: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() - z * z.transpose()
}

/// Summed squared ray-to-point distance of one input, in final-frame units.
fn ray_cost(rays: &[(u64, Ray<f64>)], cloud: &PointMap, to_final: &SimilarityTransform<f64>) -> f64 {
    let (r, t, s) = constraint_form(to_final);
    rays.iter()
        .filter_map(|(pid, ray)| {
            let x = cloud.get(pid)?;
            Some((projector(&ray.direction) * (r * x + t - ray.origin * s)).norm_squared())
        })
        .sum()
}

/// Lowest-cost similarity for one input against a fixed cloud, if it beats
/// the current one.
fn refit(rays: &[(u64, Ray<f64>)], cloud: &PointMap, to_final: &SimilarityTransform<f64>) -> Option<SimilarityTransform<f64>> {
    let cs: Vec<Correspondence<f64>> = rays
        .iter()
        .filter_map(|(pid, ray)| Some(Correspondence::new(*ray, *cloud.get(pid)?).ok()?.with_point_id(*pid)))
        .collect();
    let report = gdls_solve_with(&cs, &Default::default()).ok()?;
    let mut best = (ray_cost(rays, cloud, to_final), None);
    for cand in report.candidates.iter().filter(|c| !c.cheirality_violation) {
        let t = cand.transform.inverse();
        let c = ray_cost(rays, cloud, &t);
        if c < best.0 {
            best = (c, Some(t));
        }
    }
    best.1
}

/// Joint polish of the per-input similarities and the shared points.
/// Alternates gDLS+++ refits of every input except the root against the
/// shared cloud with re-triangulation of that cloud from all rays; both steps
/// minimize the summed squared ray-to-point distance, so the recorded cost is
/// non-increasing. The output cloud averages each point over its holders.
pub fn refine_similarities(report: &MergeReport, subsets: &[Subset]) -> Result<MergeReport> {
    let by_id: BTreeMap<u64, &Subset> = subsets.iter().map(|s| (s.id, s)).collect();
    if let Some(id) = report.transform_log.keys().find(|id| !by_id.contains_key(id)) {
        return Err(Error::InvalidInput(format!("reconstruction {id} missing from refine input")));
    }
    let local: BTreeMap<u64, PointMap> = report
        .transform_log
        .keys()
        .map(|id| (*id, by_id[id].camera.point_map()))
        .collect();
    let rays = shared_rays(&by_id, &local);
    let total = |log: &BTreeMap<u64, SimilarityTransform<f64>>| -> f64 {
        let cloud = averaged_cloud(&local, log, None);
        rays.iter().map(|(id, list)| ray_cost(list, &cloud, &log[id])).sum()
    };

    let mut log = report.transform_log.clone();
    let mut costs = vec![total(&log)];
    for _ in 0..MAX_REFINE_SWEEPS {
        let previous = *costs.last().unwrap();
        let mut current = previous;
        for (id, list) in &rays {
            if *id == report.final_id {
                continue;
            }
            let others = averaged_cloud(&local, &log, Some(*id));
            if let Some(t) = refit(list, &others, &log[id]) {
                let mut trial = log.clone();
                trial.insert(*id, t);
                let cost = total(&trial);
                if cost < current {
                    log = trial;
                    current = cost;
                }
            }
        }
        costs.push(current);
        if previous - current <= REFINE_RELATIVE_TOLERANCE * costs[0] {
            break;
        }
    }

    let cloud = averaged_cloud(&local, &log, None);
    let points = report
        .final_camera
        .points()
        .iter()
        .map(|p| ScenePoint {
            id: p.id,
            position: cloud.get(&p.id).copied().unwrap_or(p.position),
        })
        .collect();
    let mut cameras: Vec<CameraPose<f64>> = Vec::new();
    let mut observations: Vec<Observation<f64>> = Vec::new();
    for (id, t) in &log {
        let moved = by_id[id].camera.transformed(t);
        cameras.extend_from_slice(moved.cameras());
        observations.extend_from_slice(moved.observations());
    }
    let final_camera = DistributedCamera::new(cameras, points, observations)?;
    Ok(MergeReport {
        final_camera,
        transform_log: log,
        refine_costs: costs,
        ..report.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_city, City};
    use crate::geometry::Quaternion;

    fn position_errors(city: &City, report: &MergeReport) -> Vec<f64> {
        city.position_errors(report)
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn select_base_rules() {
        let cam = |n: u64| {
            let pts = (0..n).map(|id| ScenePoint { id, position: Vector3::zeros() }).collect();
            DistributedCamera::new(vec![], pts, vec![]).unwrap()
        };
        let group = vec![
            Subset { id: 7, camera: cam(10) },
            Subset { id: 3, camera: cam(50) },
            Subset { id: 5, camera: cam(20) },
        ];
        assert_eq!(select_base(&group), Some(3));
        let equal = vec![
            Subset { id: 9, camera: cam(5) },
            Subset { id: 2, camera: cam(5) },
            Subset { id: 4, camera: cam(5) },
        ];
        assert_eq!(select_base(&equal), Some(2));
        assert_eq!(select_base(&[]), None);
    }

    #[test]
    fn localize_recovers_known_similarity() {
        let city = generate_city(1, 20, 0.3, 0.0, 3).unwrap();
        let base = &city.subsets[0].camera;
        let g = SimilarityTransform::new(
            Quaternion::from_axis_angle(&Vector3::new(1.0, 2.0, -1.0), 0.7).unwrap(),
            Vector3::new(3.0, -1.0, 2.0),
            2.5,
        )
        .unwrap();
        let other = base.transformed(&g);
        let r = localize(base, &other, &MergeConfig::default(), 1).unwrap();
        assert!(r.transform.rotation.angle_to(&g.rotation) <= 1e-6);
        assert!((r.transform.translation - g.translation).norm() <= 1e-6 * g.translation.norm());
        assert!((r.transform.scale - g.scale).abs() <= 1e-6 * g.scale);
    }

    #[test]
    fn disjoint_points_are_not_localizable() {
        let city = generate_city(3, 10, 0.2, 0.0, 4).unwrap();
        let err = localize(&city.subsets[0].camera, &city.subsets[2].camera, &MergeConfig::default(), 0);
        assert!(matches!(err, Err(Error::NotLocalizable(_))));
    }

    #[test]
    fn single_input_is_unchanged() {
        let city = generate_city(1, 10, 0.3, 0.0, 5).unwrap();
        let report = hierarchical_merge(&city.subsets, &MergeConfig::default()).unwrap();
        assert!(report.levels.is_empty());
        assert_eq!(report.final_camera, city.subsets[0].camera);
        assert!(report.failed_members.is_empty());
        assert_eq!(report.transform_log[&city.subsets[0].id], SimilarityTransform::identity());
    }

    #[test]
    fn two_halves_noise_free_are_exact() {
        let city = generate_city(2, 30, 0.3, 0.0, 6).unwrap();
        let report = hierarchical_merge(&city.subsets, &MergeConfig::default()).unwrap();
        assert_eq!(report.levels.len(), 1);
        assert!(report.failed_members.is_empty());
        assert_eq!(report.final_camera.cameras().len(), 60);
        assert!(position_errors(&city, &report).iter().all(|&e| e <= 1e-6));
        // Recovered frames agree with the generator's.
        let root = city.world_to_subset[&report.final_id];
        for (id, t) in &report.transform_log {
            let expected = root.compose(&city.world_to_subset[id].inverse());
            assert!(t.rotation.angle_to(&expected.rotation) <= 1e-6);
            assert!((t.scale - expected.scale).abs() <= 1e-6 * expected.scale);
        }
    }

    #[test]
    fn conservation_and_frame_coherence() {
        let mut city = generate_city(6, 8, 0.3, 0.5, 7).unwrap();
        // An extra reconstruction with no overlap cannot be localized.
        let mut lonely = generate_city(1, 5, 0.3, 0.0, 8).unwrap().subsets.remove(0);
        lonely.id = 99;
        let shifted_cams = lonely
            .camera
            .cameras()
            .iter()
            .map(|c| CameraPose { id: c.id + 10_000, ..*c })
            .collect();
        let shifted_pts: Vec<_> = lonely
            .camera
            .points()
            .iter()
            .map(|p| ScenePoint { id: p.id + 10_000, ..*p })
            .collect();
        let shifted_obs = lonely
            .camera
            .observations()
            .iter()
            .map(|o| Observation {
                camera_id: o.camera_id + 10_000,
                point_id: o.point_id + 10_000,
                ..*o
            })
            .collect();
        lonely.camera = DistributedCamera::new(shifted_cams, shifted_pts, shifted_obs).unwrap();
        city.subsets.push(lonely);

        let config = MergeConfig {
            max_group_size: 3,
            ..Default::default()
        };
        let report = hierarchical_merge(&city.subsets, &config).unwrap();
        let mut seen: Vec<u64> = report.transform_log.keys().chain(report.failed_members.keys()).copied().collect();
        seen.sort_unstable();
        let mut expected: Vec<u64> = city.subsets.iter().map(|s| s.id).collect();
        expected.sort_unstable();
        assert_eq!(seen, expected);
        assert!(report.failed_members.contains_key(&99));
        assert_eq!(report.transform_log.len(), 6);

        let merged = report.final_camera.camera_map();
        for s in &city.subsets {
            let Some(t) = report.transform_log.get(&s.id) else { continue };
            for c in s.camera.cameras() {
                assert!((t.apply(&c.center) - merged[&c.id].center).norm() <= 1e-9 * (1.0 + merged[&c.id].center.norm()));
            }
        }
    }

    #[test]
    fn groups_shrink_geometrically() {
        // Pairs of heavily overlapping subsets, weakly chained.
        let city = generate_city(8, 6, 0.3, 0.0, 9).unwrap();
        let config = MergeConfig {
            max_group_size: 2,
            ..Default::default()
        };
        let report = hierarchical_merge(&city.subsets, &config).unwrap();
        assert!(report.failed_members.is_empty());
        let mut count = city.subsets.len();
        for level in &report.levels {
            assert!(level.groups.iter().all(|g| g.members.len() <= 2));
            count = level.groups.len();
        }
        assert_eq!(count, 1);
        assert_eq!(report.levels.len(), 3);
    }

    #[test]
    fn refine_is_idempotent_when_noise_free() {
        let city = generate_city(4, 10, 0.3, 0.0, 10).unwrap();
        let report = hierarchical_merge(&city.subsets, &MergeConfig::default()).unwrap();
        let refined = refine_similarities(&report, &city.subsets).unwrap();
        for (id, t) in &report.transform_log {
            let r = refined.transform_log[id];
            assert!(t.rotation.angle_to(&r.rotation) <= 1e-9);
            assert!((t.translation - r.translation).norm() <= 1e-9 * (1.0 + t.translation.norm()));
        }
    }

    #[test]
    fn refine_cost_is_non_increasing() {
        let city = generate_city(4, 20, 0.3, 1.0, 11).unwrap();
        let report = hierarchical_merge(&city.subsets, &MergeConfig::default()).unwrap();
        let refined = refine_similarities(&report, &city.subsets).unwrap();
        assert!(refined.refine_costs.len() >= 2);
        for w in refined.refine_costs.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let before = median(position_errors(&city, &report));
        let after = median(position_errors(&city, &refined));
        assert!(after <= 1.1 * before, "before {before} after {after}");
        assert_eq!(refined.final_camera.cameras().len(), report.final_camera.cameras().len());
    }
}
