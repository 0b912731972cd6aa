//! JSON documents for reconstructions, correspondences and estimation reports.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so save/load round-trips are exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    CameraPose, Correspondence, DistributedCamera, Observation, Quaternion, Ray, ScenePoint, SimilarityTransform,
};
use crate::pipeline::MergeReport;
use crate::robust::RobustResult;
use crate::solver::SolveReport;

pub const FORMAT_VERSION: u32 = 1;

/// Directions further than this from unit length are renormalized with a warning.
pub const DIRECTION_WARN_TOLERANCE: f64 = 1e-6;
/// Directions within this of unit length are kept verbatim.
pub const DIRECTION_UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: u64,
    pub center: [f64; 3],
    /// `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub id: u64,
    pub xyz: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub camera_id: u64,
    pub point_id: u64,
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionDocument {
    pub version: u32,
    pub cameras: Vec<CameraRecord>,
    pub points: Vec<PointRecord>,
    pub observations: Vec<ObservationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceRecord {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub point: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrespondenceDocument {
    pub version: u32,
    pub correspondences: Vec<CorrespondenceRecord>,
}

/// A loaded value with the non-fatal issues found while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            location: "version".into(),
            message: format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        });
    }
    Ok(())
}

fn finite<const N: usize>(v: &[f64; N], field: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Parse {
            location: field.into(),
            message: "non-finite value".into(),
        })
    }
}

fn unit_direction(d: &[f64; 3], field: &str, warnings: &mut Vec<String>) -> Result<nalgebra::Vector3<f64>> {
    finite(d, field)?;
    let v = nalgebra::Vector3::from(*d);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Parse {
            location: field.into(),
            message: "zero direction".into(),
        });
    }
    let drift = (norm - 1.0).abs();
    if drift <= DIRECTION_UNIT_TOLERANCE {
        return Ok(v);
    }
    if drift > DIRECTION_WARN_TOLERANCE {
        warnings.push(format!("{field}: norm {norm} renormalized"));
    }
    Ok(v / norm)
}

impl ReconstructionDocument {
    pub fn from_camera(camera: &DistributedCamera<f64>) -> Self {
        Self {
            version: FORMAT_VERSION,
            cameras: camera
                .cameras()
                .iter()
                .map(|c| CameraRecord {
                    id: c.id,
                    center: c.center.into(),
                    orientation: c.orientation.coords(),
                })
                .collect(),
            points: camera
                .points()
                .iter()
                .map(|p| PointRecord {
                    id: p.id,
                    xyz: p.position.into(),
                })
                .collect(),
            observations: camera
                .observations()
                .iter()
                .map(|o| ObservationRecord {
                    camera_id: o.camera_id,
                    point_id: o.point_id,
                    direction: o.direction.into(),
                })
                .collect(),
        }
    }

    pub fn into_camera(self) -> Result<Loaded<DistributedCamera<f64>>> {
        check_version(self.version)?;
        let mut warnings = Vec::new();
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                finite(&c.center, &format!("cameras[{i}].center"))?;
                let orientation = Quaternion::from_array(c.orientation).map_err(|e| Error::Parse {
                    location: format!("cameras[{i}].orientation"),
                    message: e.to_string(),
                })?;
                Ok(CameraPose {
                    id: c.id,
                    center: c.center.into(),
                    orientation,
                })
            })
            .collect::<Result<_>>()?;
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                finite(&p.xyz, &format!("points[{i}].xyz"))?;
                Ok(ScenePoint {
                    id: p.id,
                    position: p.xyz.into(),
                })
            })
            .collect::<Result<_>>()?;
        let observations = self
            .observations
            .iter()
            .enumerate()
            .map(|(i, o)| {
                Ok(Observation {
                    camera_id: o.camera_id,
                    point_id: o.point_id,
                    direction: unit_direction(&o.direction, &format!("observations[{i}].direction"), &mut warnings)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Loaded {
            value: DistributedCamera::new(cameras, points, observations)?,
            warnings,
        })
    }
}

pub fn parse_reconstruction(text: &str) -> Result<Loaded<DistributedCamera<f64>>> {
    parse_json::<ReconstructionDocument>(text)?.into_camera()
}

pub fn load_reconstruction(path: impl AsRef<Path>) -> Result<Loaded<DistributedCamera<f64>>> {
    parse_reconstruction(&read(path.as_ref())?)
}

pub fn reconstruction_to_string(camera: &DistributedCamera<f64>) -> String {
    to_json(&ReconstructionDocument::from_camera(camera))
}

pub fn save_reconstruction(path: impl AsRef<Path>, camera: &DistributedCamera<f64>) -> Result<()> {
    write(path.as_ref(), &reconstruction_to_string(camera))
}

pub fn correspondences_to_string(correspondences: &[Correspondence<f64>]) -> String {
    to_json(&CorrespondenceDocument {
        version: FORMAT_VERSION,
        correspondences: correspondences
            .iter()
            .map(|c| CorrespondenceRecord {
                origin: c.ray.origin.into(),
                direction: c.ray.direction.into(),
                point: c.point.into(),
                score: c.score,
                point_id: c.point_id,
            })
            .collect(),
    })
}

pub fn parse_correspondences(text: &str) -> Result<Loaded<Vec<Correspondence<f64>>>> {
    let doc: CorrespondenceDocument = parse_json(text)?;
    check_version(doc.version)?;
    let mut warnings = Vec::new();
    let value = doc
        .correspondences
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let at = |f: &str| format!("correspondences[{i}].{f}");
            finite(&r.origin, &at("origin"))?;
            finite(&r.point, &at("point"))?;
            let direction = unit_direction(&r.direction, &at("direction"), &mut warnings)?;
            let mut c = Correspondence::new(
                Ray {
                    origin: r.origin.into(),
                    direction,
                },
                r.point.into(),
            )?;
            if let Some(s) = r.score {
                c = c.with_score(s).map_err(|e| Error::Parse {
                    location: at("score"),
                    message: e.to_string(),
                })?;
            }
            c.point_id = r.point_id;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(Loaded { value, warnings })
}

pub fn load_correspondences(path: impl AsRef<Path>) -> Result<Loaded<Vec<Correspondence<f64>>>> {
    parse_correspondences(&read(path.as_ref())?)
}

pub fn save_correspondences(path: impl AsRef<Path>, correspondences: &[Correspondence<f64>]) -> Result<()> {
    write(path.as_ref(), &correspondences_to_string(correspondences))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    /// `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl From<&SimilarityTransform<f64>> for TransformRecord {
    fn from(t: &SimilarityTransform<f64>) -> Self {
        Self {
            rotation: t.rotation.coords(),
            translation: t.translation.into(),
            scale: t.scale,
        }
    }
}

impl TryFrom<&TransformRecord> for SimilarityTransform<f64> {
    type Error = Error;

    fn try_from(r: &TransformRecord) -> Result<Self> {
        SimilarityTransform::new(Quaternion::from_array(r.rotation)?, r.translation.into(), r.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub transform: TransformRecord,
    pub cost: f64,
    pub stationarity_residual: f64,
    pub cheirality_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    /// World-to-local similarity of the best candidate.
    pub best: TransformRecord,
    pub candidates: Vec<CandidateRecord>,
}

impl From<&SolveReport<f64>> for SolveRecord {
    fn from(r: &SolveReport<f64>) -> Self {
        Self {
            best: (&r.best().transform).into(),
            candidates: r
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    transform: (&c.transform).into(),
                    cost: c.cost,
                    stationarity_residual: c.stationarity_residual,
                    cheirality_violation: c.cheirality_violation,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustRecord {
    pub transform: TransformRecord,
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
    pub inlier_ratio: f64,
}

impl From<&RobustResult> for RobustRecord {
    fn from(r: &RobustResult) -> Self {
        Self {
            transform: (&r.transform).into(),
            inlier_indices: r.inlier_indices.clone(),
            iterations_run: r.iterations_run,
            inlier_ratio: r.inlier_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub members: Vec<u64>,
    pub base: u64,
    pub localized: BTreeMap<u64, RobustRecord>,
    pub unlocalized: BTreeMap<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub levels: Vec<Vec<GroupRecord>>,
    pub failed_members: BTreeMap<u64, String>,
    pub final_id: u64,
    /// Input id to the similarity taking its frame into the merged one.
    pub transform_log: BTreeMap<u64, TransformRecord>,
}

impl From<&MergeReport> for MergeRecord {
    fn from(r: &MergeReport) -> Self {
        Self {
            levels: r
                .levels
                .iter()
                .map(|l| {
                    l.groups
                        .iter()
                        .map(|g| GroupRecord {
                            members: g.members.clone(),
                            base: g.base,
                            localized: g.localized.iter().map(|(k, v)| (*k, v.into())).collect(),
                            unlocalized: g.unlocalized.clone(),
                        })
                        .collect()
                })
                .collect(),
            failed_members: r.failed_members.clone(),
            final_id: r.final_id,
            transform_log: r.transform_log.iter().map(|(k, v)| (*k, v.into())).collect(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
