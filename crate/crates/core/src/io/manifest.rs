//! The dataset manifest ties together everything `evaluate` reads.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{read_corners, read_faces, read_json, read_predictions, resolve, sha256_file, Provenance, Stamped};
use crate::calibration::{CalibrationResult, CameraId, StereoRig};
use crate::error::{Error, Result};
use crate::gaze::{GazeConvention, GazePrediction};
use crate::pipeline::{FrameMeta, MethodSpec};
use crate::plane_pose::{estimate_plane_pose, GridConfig, PlanePose};
use crate::reconstruction::{FaceObservation, HeadSource};

/// Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub grid_config: PathBuf,
    pub calibration: CalibrationPaths,
    /// Display corners seen by the left camera (corner CSV).
    pub plane_corners: PathBuf,
    /// Precomputed plane pose; estimated from `plane_corners` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_pose: Option<PathBuf>,
    pub faces: PathBuf,
    pub methods: Vec<MethodEntry>,
    pub frames: Vec<FrameMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationPaths {
    pub left: PathBuf,
    pub right: PathBuf,
    pub stereo: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub id: String,
    pub predictions: PathBuf,
    pub convention: GazeConvention,
    pub head_source: HeadSource,
}

impl MethodEntry {
    pub fn spec(&self) -> MethodSpec {
        MethodSpec {
            id: self.id.clone(),
            convention: self.convention,
            head_source: self.head_source,
        }
    }
}

/// Contents of a plane pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePoseFile {
    /// sha256 of the grid config the pose was estimated with.
    pub grid_sha256: String,
    pub pose: PlanePose,
}

/// Every input of an evaluation, parsed and cross-checked.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub grid: GridConfig,
    pub rig: StereoRig,
    pub plane: PlanePose,
    pub frames: Vec<FrameMeta>,
    pub faces: Vec<FaceObservation>,
    pub predictions: Vec<GazePrediction>,
    pub methods: Vec<MethodSpec>,
    /// Hashes of the manifest and every file it references.
    pub provenance: Provenance,
}

/// Left-camera rows of a corner table as plane-pose input.
pub(crate) fn left_corners(table: &super::CornerTable) -> Vec<((u32, u32), Vector2<f64>)> {
    table
        .corners
        .iter()
        .filter(|c| c.camera == CameraId::Left)
        .map(|c| (c.grid_index, c.pixel))
        .collect()
}

fn label(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(Error::field("frames", format!("duplicate frame_id `{}`", f.frame_id)));
            }
        }
        let mut ids = BTreeSet::new();
        for m in &self.methods {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::field("methods", format!("duplicate method id `{}`", m.id)));
            }
        }
        Ok(())
    }

    /// Loads the manifest at `path` and everything it references.
    /// `methods` restricts evaluation to the listed method ids.
    pub fn load(path: &Path, methods: Option<&[String]>) -> Result<LoadedDataset> {
        let manifest: DatasetManifest = read_json(path)?;
        manifest.validate()?;
        let mut prov = Provenance::default();
        prov.add_file("manifest", path)?;
        let file = |rel: &Path, prov: &mut Provenance| -> Result<PathBuf> {
            let full = resolve(path, rel);
            prov.add_file(label(rel), &full)?;
            Ok(full)
        };

        let grid_path = file(&manifest.grid_config, &mut prov)?;
        let grid: GridConfig = read_json(&grid_path)?;
        grid.validate()?;
        let grid_hash = sha256_file(&grid_path)?;

        let left: Stamped<CalibrationResult> = read_json(&file(&manifest.calibration.left, &mut prov)?)?;
        let right: Stamped<CalibrationResult> = read_json(&file(&manifest.calibration.right, &mut prov)?)?;
        let rig: Stamped<StereoRig> = read_json(&file(&manifest.calibration.stereo, &mut prov)?)?;
        let rig = rig.data;
        if rig.left != left.data.intrinsics || rig.right != right.data.intrinsics {
            return Err(Error::field(
                "calibration",
                "stereo file intrinsics differ from the per-camera calibration files",
            ));
        }

        let corners_path = file(&manifest.plane_corners, &mut prov)?;
        let plane = match &manifest.plane_pose {
            Some(rel) => {
                let stamped: Stamped<PlanePoseFile> = read_json(&file(rel, &mut prov)?)?;
                if stamped.data.grid_sha256 != grid_hash {
                    return Err(Error::field(
                        "plane_pose",
                        format!("`{}` was estimated with a different grid config", rel.display()),
                    ));
                }
                stamped.data.pose
            }
            None => {
                info!("no plane_pose in manifest, estimating from {}", manifest.plane_corners.display());
                let table = read_corners(&corners_path)?;
                estimate_plane_pose(&left_corners(&table), &grid, &rig.left)?
            }
        };

        let faces = read_faces(&file(&manifest.faces, &mut prov)?)?;

        let selected: Vec<&MethodEntry> = match methods {
            None => manifest.methods.iter().collect(),
            Some(ids) => {
                for id in ids {
                    if !manifest.methods.iter().any(|m| &m.id == id) {
                        return Err(Error::field("methods", format!("method `{id}` is not in the manifest")));
                    }
                }
                manifest.methods.iter().filter(|m| ids.contains(&m.id)).collect()
            }
        };
        let mut predictions = Vec::new();
        for m in &selected {
            let pred_path = file(&m.predictions, &mut prov)?;
            let table = read_predictions(&pred_path)?;
            if let Some(c) = table.convention.filter(|c| *c != m.convention) {
                return Err(Error::field(
                    "convention",
                    format!(
                        "`{}` declares {c:?} but the manifest says {:?} for method `{}`",
                        m.predictions.display(),
                        m.convention,
                        m.id
                    ),
                ));
            }
            for mut p in table.predictions {
                if p.method_id != m.id {
                    return Err(Error::field(
                        "method",
                        format!(
                            "`{}` contains rows for method `{}`, expected `{}`",
                            m.predictions.display(),
                            p.method_id,
                            m.id
                        ),
                    ));
                }
                p.convention = m.convention;
                predictions.push(p);
            }
        }

        Ok(LoadedDataset {
            grid,
            rig,
            plane,
            frames: manifest.frames,
            faces,
            predictions,
            methods: selected.iter().map(|m| m.spec()).collect(),
            provenance: prov,
        })
    }
}
