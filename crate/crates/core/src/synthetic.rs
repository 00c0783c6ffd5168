//! Synthetic scenes with exactly known geometry.
//!
//! A scene is a stereo rig looking across a table at participants whose
//! heads sit inside boxes above a display grid. Generation produces the
//! same observations real data would: checkerboard corners for
//! calibration, display corners for the plane pose, face observations,
//! and per-method gaze predictions, together with the ground truth.
//!
//! All randomness derives from explicit seeds. Every frame draws from its
//! own ChaCha stream (seed, frame index), so serial and parallel runs
//! produce identical output.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Unit, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{CameraId, CornerObservation, StereoRig};
use crate::error::{Error, Result};
use crate::gaze::{camera_offset_angles, correct_gaze_to_camera_frame, GazeConvention, GazePrediction};
use crate::geom::{
    dir_to_yaw_pitch, yaw_pitch_to_dir, CameraIntrinsics, Distortion, RigidTransform, Rotation, UnitVec3, Vec3,
    YawPitch,
};
use crate::metrics::{summarize, MetricsSummary};
use crate::pipeline::{self, EvalInputs, FrameMeta, MethodSpec};
use crate::plane_pose::{grid_points, target_center, GridConfig, PlanePose};
use crate::reconstruction::{FaceObservation, HeadPoint, HeadSource};

/// Attempts per sample before giving up on a constraint.
pub const MAX_RESAMPLES: usize = 100;

/// Box in the workspace frame from which one participant's head is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRegion {
    pub name: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rig: StereoRig,
    /// Ground-truth camera-to-workspace transform.
    pub plane: PlanePose,
    pub grid: GridConfig,
    /// Checkerboard used for the calibration views.
    pub board: GridConfig,
    pub calibration_views: usize,
    pub participants: Vec<HeadRegion>,
    pub frames: usize,
    pub methods: Vec<MethodSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub corner_px_sigma: f64,
    #[serde(default)]
    pub face_px_sigma: f64,
    #[serde(default)]
    pub gaze_angle_sigma_deg: f64,
    /// Constant offset added to every prediction, degrees.
    #[serde(default)]
    pub gaze_bias_deg: YawPitch,
}

impl NoiseSpec {
    pub fn gaze(sigma_deg: f64) -> Self {
        Self {
            gaze_angle_sigma_deg: sigma_deg,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("corner_px_sigma", self.corner_px_sigma),
            ("face_px_sigma", self.face_px_sigma),
            ("gaze_angle_sigma_deg", self.gaze_angle_sigma_deg),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::field(name, format!("must be a finite value >= 0, got {v}")));
            }
        }
        if !self.gaze_bias_deg.yaw.is_finite() || !self.gaze_bias_deg.pitch.is_finite() {
            return Err(Error::field("gaze_bias_deg", "must be finite"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == NoiseSpec::default()
    }
}

/// Right-handed camera orientation looking along `forward` with `down`
/// completing the frame (+X right, +Y down, +Z forward), as plane_from_camera.
fn look_rotation(forward: Vec3, down_hint: Vec3) -> Rotation {
    let z = forward.normalize();
    let x = down_hint.cross(&z).normalize();
    let y = z.cross(&x);
    Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

impl SceneSpec {
    /// Tabletop setup: a rig with 6 cm baseline 20 cm behind the near edge
    /// of a 24×60 cm display, 42 cm above the table and tilted 30° down;
    /// two participants seated across the table.
    pub fn tabletop(frames: usize, seed: u64) -> Self {
        let left = CameraIntrinsics {
            fx: 505.0,
            fy: 503.0,
            cx: 641.5,
            cy: 478.2,
            skew: 0.0,
            dist: Distortion {
                k1: -0.12,
                k2: 0.018,
                p1: 4e-4,
                p2: -3e-4,
                k3: 0.0,
            },
            image_size: (1280, 960),
        };
        let right = CameraIntrinsics {
            fx: 498.0,
            fy: 499.5,
            cx: 636.0,
            cy: 483.0,
            skew: 0.0,
            dist: Distortion {
                k1: -0.115,
                k2: 0.016,
                p1: -2e-4,
                p2: 1e-4,
                k3: 0.0,
            },
            image_size: (1280, 960),
        };
        let right_from_left = RigidTransform::new(
            Rotation::from_scaled_axis(Vec3::new(0.004, -0.012, 0.002)),
            Vec3::new(-0.06, 0.001, -0.0005),
        );
        let tilt = 30f64.to_radians();
        let forward = Vec3::new(tilt.cos(), 0.0, -tilt.sin());
        let rotation = look_rotation(forward, Vec3::new(0.0, 0.0, -1.0));
        let plane_from_camera = RigidTransform::new(rotation, Vec3::new(-0.20, 0.33, 0.42));

        let tagset = |t: &str| [t.to_string()].into_iter().collect();
        Self {
            rig: StereoRig {
                left,
                right,
                right_from_left,
            },
            plane: PlanePose::new(plane_from_camera),
            grid: GridConfig::default_display(),
            board: GridConfig::new(0.03, 6, 9),
            calibration_views: 15,
            participants: vec![
                HeadRegion {
                    name: "p1".into(),
                    min: [0.52, 0.12, 0.30],
                    max: [0.62, 0.28, 0.40],
                    tags: tagset("glasses"),
                },
                HeadRegion {
                    name: "p2".into(),
                    min: [0.52, 0.32, 0.28],
                    max: [0.62, 0.48, 0.38],
                    tags: tagset("no_glasses"),
                },
            ],
            frames,
            methods: vec![
                MethodSpec {
                    id: "oracle_absolute".into(),
                    convention: GazeConvention::Absolute,
                    head_source: HeadSource::BboxCenter,
                },
                MethodSpec {
                    id: "oracle_offset".into(),
                    convention: GazeConvention::CameraOffset,
                    head_source: HeadSource::EyeMidpoint,
                },
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.left.validate()?;
        self.rig.right.validate()?;
        self.grid.validate()?;
        self.board.validate()?;
        if self.grid.targets.is_empty() {
            return Err(Error::field("grid.targets", "scene needs at least one target"));
        }
        if self.frames > 0 && self.participants.is_empty() {
            return Err(Error::field("participants", "frames need at least one head region"));
        }
        for p in &self.participants {
            if (0..3).any(|k| !(p.min[k] <= p.max[k])) {
                return Err(Error::field(
                    "participants",
                    format!("region `{}` has min above max", p.name),
                ));
            }
            if !(p.min[2] > 0.0) {
                return Err(Error::field(
                    "participants",
                    format!("region `{}` must lie above the plane (z > 0)", p.name),
                ));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::field("methods", "need at least one method"));
        }
        Ok(())
    }

    pub fn camera_from_plane(&self) -> RigidTransform {
        self.plane.transform.inverse()
    }
}

/// Ground truth of one generated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub meta: FrameMeta,
    /// Head position, left camera frame.
    pub head: Vec3,
    /// Camera-frame direction from the head to the target center.
    pub gaze: UnitVec3,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SceneSpec,
    pub calibration_corners: Vec<CornerObservation>,
    /// Display corners seen by the left camera.
    pub plane_corners: Vec<((u32, u32), Vector2<f64>)>,
    pub faces: Vec<FaceObservation>,
    /// Angles in radians.
    pub predictions: Vec<GazePrediction>,
    pub truth: Vec<FrameTruth>,
}

impl SyntheticDataset {
    pub fn frames(&self) -> Vec<FrameMeta> {
        self.truth.iter().map(|t| t.meta.clone()).collect()
    }
}

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

const STREAM_FRAMES: u64 = 1;
const STREAM_BOARD: u64 = 2;
const STREAM_CORNER_NOISE: u64 = 3;
const STREAM_FACE_NOISE: u64 = 4;
const STREAM_GAZE_NOISE: u64 = 5;

fn project_both(rig: &StereoRig, p_left: &Vec3) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let pl = rig.left.project(p_left).ok()?;
    let pr = rig.right.project(&rig.right_from_left.transform_point(p_left)).ok()?;
    (rig.left.contains(&pl) && rig.right.contains(&pr)).then_some((pl, pr))
}

fn board_views(spec: &SceneSpec) -> Result<Vec<CornerObservation>> {
    let corners = grid_points(&spec.board);
    let center = Vec3::new(
        spec.board.square_size * spec.board.rows as f64 / 2.0,
        spec.board.square_size * spec.board.cols as f64 / 2.0,
        0.0,
    );
    let mut out = Vec::new();
    for v in 0..spec.calibration_views {
        let mut rng = stream(spec.seed, STREAM_BOARD, v as u64);
        let id = format!("v{v:03}");
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            let tilt = Vec3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.4..0.4),
            );
            let rotation = Rotation::from_scaled_axis(tilt);
            let position = Vec3::new(
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.18..0.18),
                rng.random_range(0.35..0.65),
            );
            let pose = RigidTransform::new(rotation, position - rotation * center);
            let projected: Option<Vec<_>> = corners
                .iter()
                .map(|(idx, p)| project_both(&spec.rig, &pose.transform_point(p)).map(|px| (*idx, px)))
                .collect();
            if let Some(px) = projected {
                accepted = Some(px);
                break;
            }
        }
        let projected = accepted.ok_or(Error::ResampleExceeded(MAX_RESAMPLES))?;
        for (camera, pick) in [(CameraId::Left, 0), (CameraId::Right, 1)] {
            for (idx, (pl, pr)) in &projected {
                out.push(CornerObservation {
                    view_id: id.clone(),
                    camera,
                    grid_index: *idx,
                    pixel: if pick == 0 { *pl } else { *pr },
                });
            }
        }
    }
    Ok(out)
}

/// Face box around a projected head point, sized for a ~16×22 cm face.
fn face_box(k: &CameraIntrinsics, center: Vector2<f64>, depth: f64) -> [f64; 4] {
    let hw = k.fx * 0.08 / depth;
    let hh = k.fy * 0.11 / depth;
    [center.x - hw, center.y - hh, center.x + hw, center.y + hh]
}

struct GeneratedFrame {
    truth: FrameTruth,
    faces: [FaceObservation; 2],
    predictions: Vec<GazePrediction>,
}

fn generate_frame(spec: &SceneSpec, index: usize) -> Result<GeneratedFrame> {
    let mut rng = stream(spec.seed, STREAM_FRAMES, index as u64);
    let region = &spec.participants[index % spec.participants.len()];
    let targets: Vec<u32> = spec.grid.targets.keys().copied().collect();
    let camera_from_plane = spec.camera_from_plane();
    let frame_id = format!("f{index:06}");

    for _ in 0..MAX_RESAMPLES {
        let head_plane = Vec3::from_fn(|k, _| {
            if region.min[k] < region.max[k] {
                rng.random_range(region.min[k]..region.max[k])
            } else {
                region.min[k]
            }
        });
        let target_id = targets[rng.random_range(0..targets.len())];
        let head = camera_from_plane.transform_point(&head_plane);
        let Some((pl, pr)) = project_both(&spec.rig, &head) else {
            continue;
        };
        let target = camera_from_plane.transform_point(&target_center(&spec.grid, target_id)?);
        let gaze = Unit::new_normalize(target - head);
        let depth_r = spec.rig.right_from_left.transform_point(&head).z;
        let faces = [
            FaceObservation {
                frame_id: frame_id.clone(),
                camera: CameraId::Left,
                bbox: Some(face_box(&spec.rig.left, pl, head.z)),
                eye_midpoint: Some(pl),
            },
            FaceObservation {
                frame_id: frame_id.clone(),
                camera: CameraId::Right,
                bbox: Some(face_box(&spec.rig.right, pr, depth_r)),
                eye_midpoint: Some(pr),
            },
        ];
        let head_point = HeadPoint {
            position: head,
            ray_gap: 0.0,
            source: HeadSource::EyeMidpoint,
        };
        let predictions = spec
            .methods
            .iter()
            .map(|m| GazePrediction {
                frame_id: frame_id.clone(),
                method_id: m.id.clone(),
                angles: match m.convention {
                    GazeConvention::Absolute => dir_to_yaw_pitch(&gaze),
                    GazeConvention::CameraOffset => camera_offset_angles(&gaze, &head_point),
                },
                convention: m.convention,
            })
            .collect();
        return Ok(GeneratedFrame {
            truth: FrameTruth {
                meta: FrameMeta {
                    frame_id,
                    target_id,
                    tags: region.tags.clone(),
                },
                head,
                gaze,
            },
            faces,
            predictions,
        });
    }
    Err(Error::ResampleExceeded(MAX_RESAMPLES))
}

/// Generates a noiseless dataset for `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let calibration_corners = board_views(spec)?;

    let camera_from_plane = spec.camera_from_plane();
    let mut plane_corners = Vec::new();
    for (idx, p) in grid_points(&spec.grid) {
        let px = spec
            .rig
            .left
            .project(&camera_from_plane.transform_point(&p))
            .ok()
            .filter(|px| spec.rig.left.contains(px))
            .ok_or_else(|| {
                Error::field("plane", format!("display corner {idx:?} is not visible in the left camera"))
            })?;
        plane_corners.push((idx, px));
    }

    let frames: Vec<GeneratedFrame> = (0..spec.frames)
        .into_par_iter()
        .map(|i| generate_frame(spec, i))
        .collect::<Result<_>>()?;
    let mut faces = Vec::with_capacity(2 * frames.len());
    let mut predictions = Vec::with_capacity(spec.methods.len() * frames.len());
    let mut truth = Vec::with_capacity(frames.len());
    for f in frames {
        faces.extend(f.faces);
        predictions.extend(f.predictions);
        truth.push(f.truth);
    }
    Ok(SyntheticDataset {
        spec: spec.clone(),
        calibration_corners,
        plane_corners,
        faces,
        predictions,
        truth,
    })
}

fn gaussian_2d(rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> Vector2<f64> {
    Vector2::new(normal.sample(rng), normal.sample(rng))
}

/// Rotates `d` by `angle` about a uniformly random axis perpendicular to it.
pub fn rotate_perpendicular(d: &UnitVec3, angle: f64, rng: &mut impl Rng) -> UnitVec3 {
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = Unit::new_normalize(e1 * phi.cos() + e2 * phi.sin());
    Unit::new_normalize(Rotation::from_axis_angle(&axis, angle) * d.into_inner())
}

/// Adds measurement noise to a dataset. Zero noise returns it unchanged.
///
/// Gaze noise rotates the true predicted direction by `|N(0, σ)|` about a
/// random perpendicular axis, then adds the fixed bias in yaw/pitch.
pub fn perturb(dataset: &SyntheticDataset, noise: &NoiseSpec, seed: u64) -> Result<SyntheticDataset> {
    noise.validate()?;
    let mut out = dataset.clone();
    if noise.corner_px_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.corner_px_sigma).expect("valid sigma");
        let mut rng = stream(seed, STREAM_CORNER_NOISE, 0);
        for c in &mut out.calibration_corners {
            c.pixel += gaussian_2d(&mut rng, &normal);
        }
        let mut rng = stream(seed, STREAM_CORNER_NOISE, 1);
        for c in &mut out.plane_corners {
            c.1 += gaussian_2d(&mut rng, &normal);
        }
    }
    if noise.face_px_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.face_px_sigma).expect("valid sigma");
        out.faces.par_iter_mut().enumerate().for_each(|(i, f)| {
            let mut rng = stream(seed, STREAM_FACE_NOISE, i as u64);
            let shift = gaussian_2d(&mut rng, &normal);
            if let Some(e) = f.eye_midpoint.as_mut() {
                *e += shift;
            }
            let shift = gaussian_2d(&mut rng, &normal);
            if let Some(b) = f.bbox.as_mut() {
                b[0] += shift.x;
                b[2] += shift.x;
                b[1] += shift.y;
                b[3] += shift.y;
            }
        });
    }
    if noise.gaze_angle_sigma_deg > 0.0 || noise.gaze_bias_deg != YawPitch::default() {
        let sigma = noise.gaze_angle_sigma_deg.to_radians();
        let bias = YawPitch::from_degrees(noise.gaze_bias_deg.yaw, noise.gaze_bias_deg.pitch);
        let heads: std::collections::HashMap<&str, Vec3> = dataset
            .truth
            .iter()
            .map(|t| (t.meta.frame_id.as_str(), t.head))
            .collect();
        out.predictions.par_iter_mut().enumerate().try_for_each(|(i, p)| {
            let head = HeadPoint {
                position: *heads.get(p.frame_id.as_str()).ok_or_else(|| {
                    Error::MissingObservation(format!("no ground truth for frame `{}`", p.frame_id))
                })?,
                ray_gap: 0.0,
                source: HeadSource::EyeMidpoint,
            };
            let mut rng = stream(seed, STREAM_GAZE_NOISE, i as u64);
            let mut angles = p.angles;
            if sigma > 0.0 {
                let magnitude = (Normal::new(0.0, sigma).expect("valid sigma").sample(&mut rng)).abs();
                let d = correct_gaze_to_camera_frame(p, &head).direction;
                let noisy = rotate_perpendicular(&d, magnitude, &mut rng);
                angles = match p.convention {
                    GazeConvention::Absolute => dir_to_yaw_pitch(&noisy),
                    GazeConvention::CameraOffset => camera_offset_angles(&noisy, &head),
                };
            }
            p.angles = angles + bias;
            Ok::<_, Error>(())
        })?;
    }
    Ok(out)
}

/// Evaluates a dataset with the ground-truth rig and plane, skipping
/// calibration.
pub fn evaluate_with_truth(dataset: &SyntheticDataset) -> Result<pipeline::EvalOutput> {
    let frames = dataset.frames();
    let spec = &dataset.spec;
    pipeline::evaluate(&EvalInputs::new(
        &spec.rig,
        &spec.plane,
        &spec.grid,
        &frames,
        &dataset.faces,
        &dataset.predictions,
        &spec.methods,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationRow {
    pub sigma_deg: f64,
    pub summary: MetricsSummary,
}

/// Maps isotropic angular noise levels to surface-distance metrics on the
/// scene geometry. The same noise draws are scaled for every sigma.
pub fn amplification_study(spec: &SceneSpec, sigmas_deg: &[f64], noise_seed: u64) -> Result<Vec<AmplificationRow>> {
    let clean = generate_scene(spec)?;
    sigmas_deg
        .iter()
        .map(|&sigma| {
            let noisy = perturb(&clean, &NoiseSpec::gaze(sigma), noise_seed)?;
            let out = evaluate_with_truth(&noisy)?;
            Ok(AmplificationRow {
                sigma_deg: sigma,
                summary: summarize(&out.records(), None, &[])?,
            })
        })
        .collect()
}

/// Direction of a yaw/pitch pair; re-exported for examples.
pub fn direction(angles: YawPitch) -> UnitVec3 {
    yaw_pitch_to_dir(angles)
}
