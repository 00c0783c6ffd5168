//! Per-frame evaluation: triangulate the head, correct the prediction,
//! intersect with the surface and score against the target square.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{CameraId, StereoRig};
use crate::error::{Error, Result};
use crate::gaze::{
    correct_gaze_to_camera_frame, gaze_point_on_surface, ground_truth_direction, GazeConvention, GazePrediction,
    SurfaceGazeEstimate,
};
use crate::geom::UnitVec3;
use crate::metrics::{evaluate_frame, EvalRecord};
use crate::plane_pose::{target_center, GridConfig, PlanePose};
use crate::reconstruction::{head_point, FaceObservation, HeadPoint, HeadSource, DEFAULT_RAY_GAP_WARN};

/// How one gaze method's predictions are interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: String,
    pub convention: GazeConvention,
    pub head_source: HeadSource,
}

/// Annotation of one captured frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: String,
    pub target_id: u32,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

pub struct EvalInputs<'a> {
    pub rig: &'a StereoRig,
    pub plane: &'a PlanePose,
    pub grid: &'a GridConfig,
    pub frames: &'a [FrameMeta],
    pub faces: &'a [FaceObservation],
    pub predictions: &'a [GazePrediction],
    pub methods: &'a [MethodSpec],
    /// Triangulations with a larger ray gap are logged.
    pub ray_gap_warn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub record: EvalRecord,
    pub head: HeadPoint,
    pub predicted: UnitVec3,
    pub ground_truth: UnitVec3,
    pub estimate: SurfaceGazeEstimate,
    /// The camera-offset correction exceeded the reliable range.
    pub large_offset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub frame_id: String,
    pub method_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutput {
    /// Sorted by (frame_id, method_id).
    pub results: Vec<FrameResult>,
    pub skipped: Vec<Skipped>,
}

impl EvalOutput {
    pub fn records(&self) -> Vec<EvalRecord> {
        self.results.iter().map(|r| r.record.clone()).collect()
    }

    pub fn for_method<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a FrameResult> + 'a {
        self.results.iter().filter(move |r| r.record.method_id == method)
    }
}

type FaceIndex<'a> = HashMap<(&'a str, CameraId), &'a FaceObservation>;

fn index_faces(faces: &[FaceObservation]) -> Result<FaceIndex<'_>> {
    let mut index = HashMap::with_capacity(faces.len());
    for f in faces {
        f.validate()?;
        if index.insert((f.frame_id.as_str(), f.camera), f).is_some() {
            return Err(Error::field(
                "faces",
                format!(
                    "frame `{}` has more than one face in the {} camera",
                    f.frame_id, f.camera
                ),
            ));
        }
    }
    Ok(index)
}

fn evaluate_one(
    inputs: &EvalInputs<'_>,
    faces: &FaceIndex<'_>,
    frame: &FrameMeta,
    method: &MethodSpec,
    pred: &GazePrediction,
) -> std::result::Result<FrameResult, String> {
    let left = faces.get(&(frame.frame_id.as_str(), CameraId::Left)).copied();
    let right = faces.get(&(frame.frame_id.as_str(), CameraId::Right)).copied();
    let head = head_point(left, right, inputs.rig, method.head_source).map_err(|e| e.to_string())?;
    if head.ray_gap > inputs.ray_gap_warn {
        warn!(
            "frame `{}`: triangulation ray gap {:.1} cm exceeds {:.1} cm",
            frame.frame_id,
            head.ray_gap * 100.0,
            inputs.ray_gap_warn * 100.0
        );
    }
    let corrected = correct_gaze_to_camera_frame(pred, &head);
    let estimate = gaze_point_on_surface(&head, &corrected.direction, inputs.plane);
    let target = target_center(inputs.grid, frame.target_id).map_err(|e| e.to_string())?;
    let gt = ground_truth_direction(&head, inputs.plane, &target).map_err(|e| e.to_string())?;
    let (angular, distance) = evaluate_frame(&corrected.direction, &gt, &estimate, &target);
    Ok(FrameResult {
        record: EvalRecord {
            frame_id: frame.frame_id.clone(),
            method_id: method.id.clone(),
            target_id: frame.target_id,
            angular_error_deg: angular,
            surface_distance_m: distance,
            tags: frame.tags.clone(),
        },
        head,
        predicted: corrected.direction,
        ground_truth: gt,
        estimate,
        large_offset: corrected.large_offset,
    })
}

/// Evaluates every (frame, method) pair. Frames without a prediction for
/// a method, or whose head cannot be triangulated, are reported as skipped.
///
/// Output is identical regardless of the rayon pool size.
pub fn evaluate(inputs: &EvalInputs<'_>) -> Result<EvalOutput> {
    let faces = index_faces(inputs.faces)?;
    let mut frames: Vec<&FrameMeta> = inputs.frames.iter().collect();
    frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    if frames.windows(2).any(|w| w[0].frame_id == w[1].frame_id) {
        return Err(Error::field("frames", "duplicate frame_id"));
    }
    let known: BTreeSet<&str> = frames.iter().map(|f| f.frame_id.as_str()).collect();

    let mut methods: Vec<&MethodSpec> = inputs.methods.iter().collect();
    methods.sort_by(|a, b| a.id.cmp(&b.id));
    let mut preds: BTreeMap<(&str, &str), &GazePrediction> = BTreeMap::new();
    for p in inputs.predictions {
        if !known.contains(p.frame_id.as_str()) {
            return Err(Error::field(
                "predictions",
                format!("prediction for unknown frame `{}` (method `{}`)", p.frame_id, p.method_id),
            ));
        }
        if !methods.iter().any(|m| m.id == p.method_id) {
            continue;
        }
        if preds.insert((p.method_id.as_str(), p.frame_id.as_str()), p).is_some() {
            return Err(Error::field(
                "predictions",
                format!("duplicate prediction for frame `{}` (method `{}`)", p.frame_id, p.method_id),
            ));
        }
    }

    let outcomes: Vec<_> = frames
        .par_iter()
        .flat_map_iter(|frame| {
            let faces = &faces;
            let preds = &preds;
            methods.iter().map(move |method| {
                let outcome = match preds.get(&(method.id.as_str(), frame.frame_id.as_str())) {
                    None => Err("missing prediction".to_string()),
                    Some(pred) => {
                        let mut pred = (*pred).clone();
                        pred.convention = method.convention;
                        evaluate_one(inputs, faces, frame, method, &pred)
                    }
                };
                (frame.frame_id.clone(), method.id.clone(), outcome)
            })
        })
        .collect();

    let mut out = EvalOutput::default();
    for (frame_id, method_id, outcome) in outcomes {
        match outcome {
            Ok(r) => out.results.push(r),
            Err(reason) => out.skipped.push(Skipped {
                frame_id,
                method_id,
                reason,
            }),
        }
    }
    Ok(out)
}

impl<'a> EvalInputs<'a> {
    pub fn new(
        rig: &'a StereoRig,
        plane: &'a PlanePose,
        grid: &'a GridConfig,
        frames: &'a [FrameMeta],
        faces: &'a [FaceObservation],
        predictions: &'a [GazePrediction],
        methods: &'a [MethodSpec],
    ) -> Self {
        Self {
            rig,
            plane,
            grid,
            frames,
            faces,
            predictions,
            methods,
            ray_gap_warn: DEFAULT_RAY_GAP_WARN,
        }
    }
}
