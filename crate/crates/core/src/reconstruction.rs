//! Triangulation of the head point from paired face observations.

use nalgebra::{Unit, Vector2};
use serde::{Deserialize, Serialize};

use crate::calibration::{CameraId, StereoRig};
use crate::error::{Error, Result};
use crate::geom::{undistort_pixel, CameraIntrinsics, Frame, GazeRay, Vec3};

/// Default ray gap above which a triangulated head point is reported.
pub const DEFAULT_RAY_GAP_WARN: f64 = 0.03;

/// Face detection output for one camera and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceObservation {
    pub frame_id: String,
    pub camera: CameraId,
    /// (u_min, v_min, u_max, v_max)
    pub bbox: Option<[f64; 4]>,
    pub eye_midpoint: Option<Vector2<f64>>,
}

impl FaceObservation {
    pub fn validate(&self) -> Result<()> {
        if self.bbox.is_none() && self.eye_midpoint.is_none() {
            return Err(Error::field(
                "face observation",
                format!("frame `{}` ({} camera) has neither bbox nor eye midpoint", self.frame_id, self.camera),
            ));
        }
        if let Some([u0, v0, u1, v1]) = self.bbox {
            if !(u0 <= u1 && v0 <= v1) {
                return Err(Error::field(
                    "bbox",
                    format!("frame `{}`: bbox corners are not ordered", self.frame_id),
                ));
            }
        }
        Ok(())
    }

    pub fn bbox_center(&self) -> Option<Vector2<f64>> {
        self.bbox
            .map(|[u0, v0, u1, v1]| Vector2::new((u0 + u1) / 2.0, (v0 + v1) / 2.0))
    }
}

/// Which image point stands for the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadSource {
    BboxCenter,
    EyeMidpoint,
}

impl std::fmt::Display for HeadSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadSource::BboxCenter => "bbox_center",
            HeadSource::EyeMidpoint => "eye_midpoint",
        })
    }
}

/// Triangulated head position in the left camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadPoint {
    pub position: Vec3,
    /// Closest distance between the two triangulating rays, meters.
    pub ray_gap: f64,
    pub source: HeadSource,
}

/// Back-projects a pixel to a camera-frame ray through the camera center.
pub fn pixel_ray(k: &CameraIntrinsics, pixel: Vector2<f64>) -> Result<GazeRay> {
    let n = undistort_pixel(k, pixel)?;
    Ok(GazeRay::new(
        Vec3::zeros(),
        Unit::new_normalize(Vec3::new(n.x, n.y, 1.0)),
        Frame::Camera,
    ))
}

/// Midpoint of the common perpendicular between the left and right rays,
/// in the left camera frame. Returns the point and the ray gap.
pub fn triangulate_midpoint(
    rig: &StereoRig,
    pixel_left: Vector2<f64>,
    pixel_right: Vector2<f64>,
) -> Result<(Vec3, f64)> {
    let left = pixel_ray(&rig.left, pixel_left)?;
    let right = pixel_ray(&rig.right, pixel_right)?;
    let left_from_right = rig.right_from_left.inverse();
    let c1 = Vec3::zeros();
    let d1 = left.direction.into_inner();
    let c2 = left_from_right.translation;
    let d2 = left_from_right.rotation * right.direction.into_inner();

    let b = d1.dot(&d2);
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        return Err(Error::ParallelRays);
    }
    let w = c1 - c2;
    let d = d1.dot(&w);
    let e = d2.dot(&w);
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let p1 = c1 + d1 * s;
    let p2 = c2 + d2 * t;
    let mid = (p1 + p2) / 2.0;
    if s <= 0.0 || t <= 0.0 || mid.z <= 0.0 {
        return Err(Error::BehindCamera { z: mid.z });
    }
    let in_right = rig.right_from_left.transform_point(&mid);
    if in_right.z <= 0.0 {
        return Err(Error::BehindCamera { z: in_right.z });
    }
    Ok((mid, (p1 - p2).norm()))
}

fn select(obs: &FaceObservation, source: HeadSource) -> Option<Vector2<f64>> {
    match source {
        HeadSource::BboxCenter => obs.bbox_center(),
        HeadSource::EyeMidpoint => obs.eye_midpoint,
    }
}

/// Triangulates the head of one frame, preferring `preference` when both
/// cameras provide it and falling back to the other source otherwise.
pub fn head_point(
    left: Option<&FaceObservation>,
    right: Option<&FaceObservation>,
    rig: &StereoRig,
    preference: HeadSource,
) -> Result<HeadPoint> {
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        (l, r) => {
            let frame = l.or(r).map(|o| o.frame_id.as_str()).unwrap_or("?");
            let missing = if l.is_none() { "left" } else { "right" };
            return Err(Error::MissingObservation(format!(
                "frame `{frame}` has no {missing} camera face"
            )));
        }
    };
    if left.frame_id != right.frame_id {
        return Err(Error::MissingObservation(format!(
            "face observations belong to different frames (`{}` vs `{}`)",
            left.frame_id, right.frame_id
        )));
    }
    let fallback = match preference {
        HeadSource::BboxCenter => HeadSource::EyeMidpoint,
        HeadSource::EyeMidpoint => HeadSource::BboxCenter,
    };
    let (source, pl, pr) = [preference, fallback]
        .into_iter()
        .find_map(|s| Some((s, select(left, s)?, select(right, s)?)))
        .ok_or_else(|| {
            Error::MissingObservation(format!(
                "frame `{}` has no head point available in both cameras",
                left.frame_id
            ))
        })?;
    let (position, ray_gap) = triangulate_midpoint(rig, pl, pr)?;
    Ok(HeadPoint {
        position,
        ray_gap,
        source,
    })
}
