//! Checkerboard camera calibration and stereo extrinsics.
//!
//! The pipeline for one camera is: per-view homographies, closed-form
//! intrinsics, per-view pose initialization, then joint damped least
//! squares over intrinsics (with distortion) and all view poses. The stereo
//! step averages per-view relative poses and refines the single
//! right-from-left transform against the right camera's corners.

mod homography;
mod zhang;

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

pub use homography::{estimate_homography, pose_from_homography};
pub(crate) use homography::pose_from_homography_matrix;
pub use zhang::{intrinsics_from_homographies, MAX_CONDITION};

use crate::error::{Error, Result};
use crate::geom::{nearest_rotation, CameraIntrinsics, Distortion, RigidTransform, Vec3};
use crate::lm::{self, fd_pair, LeastSquaresProblem, LmConfig};
use crate::plane_pose::GridConfig;

pub type ViewId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraId {
    Left,
    Right,
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CameraId::Left => "left",
            CameraId::Right => "right",
        })
    }
}

impl std::str::FromStr for CameraId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "left" => Ok(CameraId::Left),
            "right" => Ok(CameraId::Right),
            other => Err(format!("unknown camera `{other}` (expected left|right)")),
        }
    }
}

/// One detected checkerboard corner.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerObservation {
    pub view_id: ViewId,
    pub camera: CameraId,
    /// (row, column) of the corner on the board.
    pub grid_index: (u32, u32),
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: CameraIntrinsics,
    /// camera_from_board for every view.
    pub per_view_poses: BTreeMap<ViewId, RigidTransform>,
    pub rms_reprojection: f64,
    pub per_view_rms: BTreeMap<ViewId, f64>,
}

/// Two calibrated cameras and the pose of the right camera relative to the
/// left one (`p_right = R p_left + t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub right_from_left: RigidTransform,
}

impl StereoRig {
    pub fn baseline(&self) -> f64 {
        self.right_from_left.translation.norm()
    }

    /// Right camera center in the left camera frame.
    pub fn right_center(&self) -> Vec3 {
        self.right_from_left.inverse().translation
    }

    pub fn intrinsics(&self, camera: CameraId) -> &CameraIntrinsics {
        match camera {
            CameraId::Left => &self.left,
            CameraId::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Keep skew at zero. Releasing it requires three or more views.
    pub fix_skew: bool,
    /// Keep the sixth-order radial term at its initial value (zero). It is
    /// poorly constrained unless the views cover the image corners.
    pub fix_k3: bool,
    pub lm: LmConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fix_skew: true,
            fix_k3: true,
            lm: LmConfig::default(),
        }
    }
}

/// Corners of one view, sorted by grid index.
#[derive(Debug, Clone)]
struct ViewCorners {
    id: ViewId,
    board: Vec<Vec3>,
    pixels: Vec<Vector2<f64>>,
}

/// Groups observations of one camera by view. Views with fewer than four
/// corners are dropped with a warning.
fn group_views(
    observations: &[CornerObservation],
    camera: CameraId,
    grid: &GridConfig,
) -> Result<Vec<ViewCorners>> {
    let mut by_view: BTreeMap<&str, Vec<&CornerObservation>> = BTreeMap::new();
    for obs in observations.iter().filter(|o| o.camera == camera) {
        by_view.entry(obs.view_id.as_str()).or_default().push(obs);
    }
    let mut views = Vec::with_capacity(by_view.len());
    for (id, mut corners) in by_view {
        if corners.len() < 4 {
            warn!(
                "dropping view `{id}` ({camera} camera): only {} corner(s) detected",
                corners.len()
            );
            continue;
        }
        corners.sort_by_key(|o| o.grid_index);
        if corners.windows(2).any(|w| w[0].grid_index == w[1].grid_index) {
            return Err(Error::field(
                "grid_index",
                format!("duplicate corner in view `{id}` ({camera} camera)"),
            ));
        }
        let mut board = Vec::with_capacity(corners.len());
        for o in &corners {
            board.push(grid.corner_point(o.grid_index)?);
        }
        views.push(ViewCorners {
            id: id.to_string(),
            board,
            pixels: corners.iter().map(|o| o.pixel).collect(),
        });
    }
    Ok(views)
}

fn view_homography(view: &ViewCorners) -> Result<Matrix3<f64>> {
    let c: Vec<_> = view
        .board
        .iter()
        .zip(&view.pixels)
        .map(|(b, p)| (Vector2::new(b.x, b.y), *p))
        .collect();
    estimate_homography(&c).map_err(|e| match e {
        Error::DegenerateConfiguration(msg) => {
            Error::DegenerateConfiguration(format!("view `{}`: {msg}", view.id))
        }
        other => other,
    })
}

/// Full single-camera calibration from corner observations.
pub fn calibrate_camera(
    observations: &[CornerObservation],
    camera: CameraId,
    grid: &GridConfig,
    image_size: (u32, u32),
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let views = group_views(observations, camera, grid)?;
    let homographies = views
        .iter()
        .map(view_homography)
        .collect::<Result<Vec<_>>>()?;
    let intrinsics = intrinsics_from_homographies(&homographies, image_size, options.fix_skew)
        .map_err(|e| match e {
            Error::IllConditioned(msg) => {
                let ids: Vec<_> = views.iter().map(|v| v.id.as_str()).collect();
                Error::IllConditioned(format!("{camera} camera, views [{}]: {msg}", ids.join(", ")))
            }
            other => other,
        })?;
    let mut poses = BTreeMap::new();
    for (view, h) in views.iter().zip(&homographies) {
        let pose = pose_from_homography(&intrinsics, h).map_err(|e| match e {
            Error::InvalidPose(msg) => Error::InvalidPose(format!("view `{}`: {msg}", view.id)),
            other => other,
        })?;
        poses.insert(view.id.clone(), pose);
    }
    let init = CalibrationResult {
        intrinsics,
        per_view_poses: poses,
        rms_reprojection: 0.0,
        per_view_rms: BTreeMap::new(),
    };
    refine_calibration(observations, camera, grid, &init, options)
}

/// Parameter layout: [fx fy cx cy (skew) k1 k2 p1 p2 (k3)] then 6 per view.
struct IntrinsicsProblem<'a> {
    views: &'a [ViewCorners],
    fix_skew: bool,
    fix_k3: bool,
}

#[derive(Debug, Clone)]
struct IntrinsicsState {
    intrinsics: CameraIntrinsics,
    poses: Vec<RigidTransform>,
}

const BEHIND_PENALTY: f64 = 1e6;

fn reprojection_residuals(
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    board: &[Vec3],
    pixels: &[Vector2<f64>],
    out: &mut [f64],
) {
    for (n, (b, px)) in board.iter().zip(pixels).enumerate() {
        match k.project(&pose.transform_point(b)) {
            Ok(p) => {
                out[2 * n] = p.x - px.x;
                out[2 * n + 1] = p.y - px.y;
            }
            Err(_) => {
                out[2 * n] = BEHIND_PENALTY;
                out[2 * n + 1] = BEHIND_PENALTY;
            }
        }
    }
}

impl IntrinsicsProblem<'_> {
    fn n_intrinsics(&self) -> usize {
        8 + usize::from(!self.fix_skew) + usize::from(!self.fix_k3)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.views.len() + 1);
        let mut acc = 0;
        for v in self.views {
            off.push(acc);
            acc += 2 * v.board.len();
        }
        off.push(acc);
        off
    }

    fn view_residuals(&self, state: &IntrinsicsState, v: usize) -> DVector<f64> {
        let view = &self.views[v];
        let mut out = DVector::zeros(2 * view.board.len());
        reprojection_residuals(
            &state.intrinsics,
            &state.poses[v],
            &view.board,
            &view.pixels,
            out.as_mut_slice(),
        );
        out
    }

    fn intrinsic_values(&self, k: &CameraIntrinsics) -> Vec<f64> {
        let mut v = vec![k.fx, k.fy, k.cx, k.cy];
        if !self.fix_skew {
            v.push(k.skew);
        }
        let d = k.dist.as_array();
        v.extend_from_slice(if self.fix_k3 { &d[..4] } else { &d });
        v
    }
}

impl LeastSquaresProblem for IntrinsicsProblem<'_> {
    type State = IntrinsicsState;

    fn num_params(&self) -> usize {
        self.n_intrinsics() + 6 * self.views.len()
    }

    fn residuals(&self, state: &IntrinsicsState) -> DVector<f64> {
        let off = self.offsets();
        let mut out = DVector::zeros(off[self.views.len()]);
        for (v, view) in self.views.iter().enumerate() {
            reprojection_residuals(
                &state.intrinsics,
                &state.poses[v],
                &view.board,
                &view.pixels,
                &mut out.as_mut_slice()[off[v]..off[v + 1]],
            );
        }
        out
    }

    fn retract(&self, state: &IntrinsicsState, delta: &DVector<f64>) -> IntrinsicsState {
        let ni = self.n_intrinsics();
        let mut vals = self.intrinsic_values(&state.intrinsics);
        for (v, d) in vals.iter_mut().zip(delta.iter()) {
            *v += d;
        }
        let mut k = state.intrinsics;
        k.fx = vals[0];
        k.fy = vals[1];
        k.cx = vals[2];
        k.cy = vals[3];
        let d0 = if self.fix_skew {
            4
        } else {
            k.skew = vals[4];
            5
        };
        let k3 = if self.fix_k3 { k.dist.k3 } else { vals[d0 + 4] };
        k.dist = Distortion::from_array([vals[d0], vals[d0 + 1], vals[d0 + 2], vals[d0 + 3], k3]);
        let poses = state
            .poses
            .iter()
            .enumerate()
            .map(|(v, p)| {
                let b = ni + 6 * v;
                p.perturbed(
                    &Vec3::new(delta[b], delta[b + 1], delta[b + 2]),
                    &Vec3::new(delta[b + 3], delta[b + 4], delta[b + 5]),
                )
            })
            .collect();
        IntrinsicsState { intrinsics: k, poses }
    }

    fn param_scale(&self, state: &IntrinsicsState, k: usize) -> f64 {
        if k < 4 {
            self.intrinsic_values(&state.intrinsics)[k]
        } else {
            1.0
        }
    }

    /// Central differences exploiting that a view pose only moves that
    /// view's residuals.
    fn jacobian(&self, state: &IntrinsicsState) -> DMatrix<f64> {
        let off = self.offsets();
        let m = off[self.views.len()];
        let ni = self.n_intrinsics();
        let mut jac = DMatrix::zeros(m, self.num_params());
        for k in 0..ni {
            let (plus, minus, h) = fd_pair(self, state, k);
            let col = (self.residuals(&plus) - self.residuals(&minus)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        for v in 0..self.views.len() {
            for c in 0..6 {
                let k = ni + 6 * v + c;
                let (plus, minus, h) = fd_pair(self, state, k);
                let col = (self.view_residuals(&plus, v) - self.view_residuals(&minus, v)) / (2.0 * h);
                jac.view_mut((off[v], k), (col.len(), 1)).copy_from(&col);
            }
        }
        jac
    }
}

fn per_view_rms(residuals: &DVector<f64>, views: &[ViewCorners]) -> Vec<f64> {
    let mut at = 0;
    views
        .iter()
        .map(|v| {
            let n = 2 * v.board.len();
            let s = residuals.rows(at, n).norm_squared();
            at += n;
            lm::rms(s, n)
        })
        .collect()
}

/// Jointly refines intrinsics, distortion and per-view poses.
///
/// RMS values are over residual components (u and v counted separately).
pub fn refine_calibration(
    observations: &[CornerObservation],
    camera: CameraId,
    grid: &GridConfig,
    init: &CalibrationResult,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let views = group_views(observations, camera, grid)?;
    let mut poses = Vec::with_capacity(views.len());
    for v in &views {
        let pose = init.per_view_poses.get(&v.id).ok_or_else(|| {
            Error::MissingObservation(format!("no initial pose for view `{}`", v.id))
        })?;
        poses.push(*pose);
    }
    let problem = IntrinsicsProblem {
        views: &views,
        fix_skew: options.fix_skew,
        fix_k3: options.fix_k3,
    };
    let mut start = init.intrinsics;
    if options.fix_skew {
        start.skew = 0.0;
    }
    let report = lm::minimize(
        &problem,
        IntrinsicsState {
            intrinsics: start,
            poses,
        },
        &options.lm,
    );
    let residuals = problem.residuals(&report.state);
    let rms_views = per_view_rms(&residuals, &views);
    let result = CalibrationResult {
        intrinsics: report.state.intrinsics,
        per_view_poses: views
            .iter()
            .zip(&report.state.poses)
            .map(|(v, p)| (v.id.clone(), *p))
            .collect(),
        rms_reprojection: report.rms(),
        per_view_rms: views
            .iter()
            .zip(rms_views)
            .map(|(v, r)| (v.id.clone(), r))
            .collect(),
    };
    if !report.termination.converged() {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            best: Box::new(result),
        });
    }
    Ok(result)
}

struct RelativePoseProblem<'a> {
    right: &'a CameraIntrinsics,
    left_poses: Vec<RigidTransform>,
    views: Vec<&'a ViewCorners>,
}

impl LeastSquaresProblem for RelativePoseProblem<'_> {
    type State = RigidTransform;

    fn num_params(&self) -> usize {
        6
    }

    fn residuals(&self, rel: &RigidTransform) -> DVector<f64> {
        let m: usize = self.views.iter().map(|v| 2 * v.board.len()).sum();
        let mut out = DVector::zeros(m);
        let mut at = 0;
        for (view, left) in self.views.iter().zip(&self.left_poses) {
            let n = 2 * view.board.len();
            reprojection_residuals(
                self.right,
                &rel.compose(left),
                &view.board,
                &view.pixels,
                &mut out.as_mut_slice()[at..at + n],
            );
            at += n;
        }
        out
    }

    fn retract(&self, rel: &RigidTransform, d: &DVector<f64>) -> RigidTransform {
        rel.perturbed(&Vec3::new(d[0], d[1], d[2]), &Vec3::new(d[3], d[4], d[5]))
    }
}

/// Estimates the right-from-left pose of a stereo rig from views of the
/// board seen by both cameras.
pub fn calibrate_stereo(
    left: &CalibrationResult,
    right: &CalibrationResult,
    shared_views: &[ViewId],
    right_observations: &[CornerObservation],
    grid: &GridConfig,
    lm_config: &LmConfig,
) -> Result<StereoRig> {
    let mut shared: Vec<&ViewId> = shared_views
        .iter()
        .filter(|v| left.per_view_poses.contains_key(*v) && right.per_view_poses.contains_key(*v))
        .collect();
    shared.sort();
    shared.dedup();
    if shared.is_empty() {
        return Err(Error::NoSharedViews);
    }

    let mut rot_sum = Matrix3::zeros();
    let mut t_sum = Vec3::zeros();
    for id in &shared {
        let candidate = right.per_view_poses[*id].compose(&left.per_view_poses[*id].inverse());
        rot_sum += candidate.rotation.matrix();
        t_sum += candidate.translation;
    }
    let init = RigidTransform::new(nearest_rotation(&rot_sum), t_sum / shared.len() as f64);

    let right_views = group_views(right_observations, CameraId::Right, grid)?;
    let mut views = Vec::new();
    let mut left_poses = Vec::new();
    for v in &right_views {
        if shared.iter().any(|id| **id == v.id) {
            views.push(v);
            left_poses.push(left.per_view_poses[&v.id]);
        }
    }
    let right_from_left = if views.is_empty() {
        init
    } else {
        let problem = RelativePoseProblem {
            right: &right.intrinsics,
            left_poses,
            views,
        };
        let report = lm::minimize(&problem, init, lm_config);
        if !report.termination.converged() {
            return Err(Error::SolverFailure(format!(
                "stereo refinement stalled after {} iterations",
                report.iterations
            )));
        }
        report.state
    };
    Ok(StereoRig {
        left: left.intrinsics,
        right: right.intrinsics,
        right_from_left,
    })
}

/// Shared views between two calibration results, sorted.
pub fn shared_views(left: &CalibrationResult, right: &CalibrationResult) -> Vec<ViewId> {
    left.per_view_poses
        .keys()
        .filter(|k| right.per_view_poses.contains_key(*k))
        .cloned()
        .collect()
}

/// Everything `calibrate` produces.
#[derive(Debug, Clone)]
pub struct RigCalibration {
    pub left: CalibrationResult,
    pub right: CalibrationResult,
    pub rig: StereoRig,
}

/// Calibrates both cameras and the rig from one corner set.
pub fn calibrate_rig(
    observations: &[CornerObservation],
    grid: &GridConfig,
    image_size: (u32, u32),
    options: &CalibrationOptions,
) -> Result<RigCalibration> {
    let left = calibrate_camera(observations, CameraId::Left, grid, image_size, options)?;
    let right = calibrate_camera(observations, CameraId::Right, grid, image_size, options)?;
    let shared = shared_views(&left, &right);
    let rig = calibrate_stereo(&left, &right, &shared, observations, grid, &options.lm)?;
    Ok(RigCalibration { left, right, rig })
}
