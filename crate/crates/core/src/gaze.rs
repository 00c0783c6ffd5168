//! From a network's yaw/pitch and a head point to a gaze point on the
//! work surface.

use nalgebra::Unit;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    dir_to_yaw_pitch, intersect_ray_plane_z0, transform_ray, yaw_pitch_to_dir, Frame, GazeRay, UnitVec3,
    Vec3, YawPitch,
};
use crate::plane_pose::PlanePose;
use crate::reconstruction::HeadPoint;

/// Head offset beyond which adding angles is a poor stand-in for composing
/// rotations.
pub const LARGE_OFFSET_DEG: f64 = 30.0;

/// How a network reports its angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeConvention {
    /// Relative to the direction from the face to the camera center.
    CameraOffset,
    /// Already in the camera frame.
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazePrediction {
    pub frame_id: String,
    pub method_id: String,
    /// Radians.
    pub angles: YawPitch,
    pub convention: GazeConvention,
}

/// Result of [`correct_gaze_to_camera_frame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedGaze {
    pub direction: UnitVec3,
    /// Yaw/pitch of the head-to-camera direction that was added.
    pub head_offset: YawPitch,
    /// Set when either offset exceeds [`LARGE_OFFSET_DEG`].
    pub large_offset: bool,
}

/// Yaw/pitch of the direction from the head towards the camera center.
pub fn head_offset(head: &HeadPoint) -> YawPitch {
    dir_to_yaw_pitch(&Unit::new_normalize(-head.position))
}

/// Converts a prediction into a camera-frame gaze direction.
///
/// Camera-offset predictions get the head-to-camera yaw and pitch added in
/// angle space; absolute predictions are converted unchanged.
pub fn correct_gaze_to_camera_frame(pred: &GazePrediction, head: &HeadPoint) -> CorrectedGaze {
    match pred.convention {
        GazeConvention::Absolute => CorrectedGaze {
            direction: yaw_pitch_to_dir(pred.angles),
            head_offset: YawPitch::default(),
            large_offset: false,
        },
        GazeConvention::CameraOffset => {
            let offset = head_offset(head);
            let limit = LARGE_OFFSET_DEG.to_radians();
            CorrectedGaze {
                direction: yaw_pitch_to_dir(pred.angles + offset),
                head_offset: offset,
                large_offset: offset.yaw.abs() > limit || offset.pitch.abs() > limit,
            }
        }
    }
}

/// Inverse of the camera-offset correction: the prediction a perfect
/// camera-offset network would emit for `direction`.
pub fn camera_offset_angles(direction: &UnitVec3, head: &HeadPoint) -> YawPitch {
    dir_to_yaw_pitch(direction) - head_offset(head)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceStatus {
    Ok,
    NoIntersection,
    AwayFromPlane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGazeEstimate {
    /// Workspace point on `z = 0`; NaN unless `status` is ok.
    pub point: Vec3,
    pub alpha: f64,
    pub direction_cc: UnitVec3,
    pub status: SurfaceStatus,
}

impl SurfaceGazeEstimate {
    pub fn is_ok(&self) -> bool {
        self.status == SurfaceStatus::Ok
    }
}

/// Intersects the gaze ray from `head` along `direction_cc` with the work
/// surface. Failures are reported through the status, never as errors.
pub fn gaze_point_on_surface(head: &HeadPoint, direction_cc: &UnitVec3, plane: &PlanePose) -> SurfaceGazeEstimate {
    let ray = GazeRay::new(head.position, *direction_cc, Frame::Camera);
    let nan = Vec3::repeat(f64::NAN);
    let on_plane = transform_ray(&plane.camera_to_plane(), &ray).expect("camera-frame ray");
    let (point, alpha, status) = match intersect_ray_plane_z0(&on_plane) {
        Ok((p, a)) => (p, a, SurfaceStatus::Ok),
        Err(Error::NoIntersection) => (nan, f64::NAN, SurfaceStatus::NoIntersection),
        Err(Error::GazeAwayFromPlane { alpha }) => (nan, alpha, SurfaceStatus::AwayFromPlane),
        Err(e) => unreachable!("unexpected intersection error: {e}"),
    };
    SurfaceGazeEstimate {
        point,
        alpha,
        direction_cc: *direction_cc,
        status,
    }
}

/// Camera-frame direction from the head to a workspace target.
pub fn ground_truth_direction(head: &HeadPoint, plane: &PlanePose, target: &Vec3) -> Result<UnitVec3> {
    let target_cc = plane.transform.inverse().transform_point(target);
    let v = target_cc - head.position;
    if v.norm() < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "head coincides with the target".into(),
        ));
    }
    Ok(Unit::new_normalize(v))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::geom::{RigidTransform, Rotation};
    use crate::reconstruction::HeadSource;

    fn head(p: Vec3) -> HeadPoint {
        HeadPoint {
            position: p,
            ray_gap: 0.0,
            source: HeadSource::BboxCenter,
        }
    }

    fn pred(yaw: f64, pitch: f64, convention: GazeConvention) -> GazePrediction {
        GazePrediction {
            frame_id: "f".into(),
            method_id: "m".into(),
            angles: YawPitch::new(yaw, pitch),
            convention,
        }
    }

    #[test]
    fn on_axis_head_needs_no_correction() {
        let h = head(Vec3::new(0.0, 0.0, 0.6));
        let p = pred(0.3, -0.2, GazeConvention::CameraOffset);
        let c = correct_gaze_to_camera_frame(&p, &h);
        assert_eq!(c.head_offset, YawPitch::new(0.0, 0.0));
        assert_relative_eq!(
            c.direction.into_inner(),
            yaw_pitch_to_dir(p.angles).into_inner(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_prediction_looks_at_camera() {
        let a = 20f64.to_radians();
        let h = head(Vec3::new(a.sin(), 0.0, a.cos()) * 0.6);
        let c = correct_gaze_to_camera_frame(&pred(0.0, 0.0, GazeConvention::CameraOffset), &h);
        assert_relative_eq!(
            c.direction.into_inner(),
            Vec3::new(-a.sin(), 0.0, -a.cos()),
            epsilon = 1e-15
        );
        assert!(!c.large_offset);
        let far = head(Vec3::new(0.6, 0.0, 0.3));
        assert!(correct_gaze_to_camera_frame(&pred(0.0, 0.0, GazeConvention::CameraOffset), &far).large_offset);
    }

    #[test]
    fn absolute_convention_is_unchanged() {
        let h = head(Vec3::new(0.3, 0.1, 0.6));
        let p = pred(0.3, -0.2, GazeConvention::Absolute);
        let c = correct_gaze_to_camera_frame(&p, &h);
        assert_eq!(c.direction, yaw_pitch_to_dir(p.angles));
    }

    #[test]
    fn surface_point_examples() {
        let plane = PlanePose::new(RigidTransform::identity());
        let h = head(Vec3::new(0.0, 0.0, 0.4));
        let e = gaze_point_on_surface(&h, &Unit::new_normalize(Vec3::new(0.0, 0.0, -1.0)), &plane);
        assert_eq!(e.status, SurfaceStatus::Ok);
        assert_eq!(e.point, Vec3::zeros());
        assert_relative_eq!(e.alpha, 0.4);

        let e = gaze_point_on_surface(&h, &Unit::new_normalize(Vec3::new(1.0, 0.0, 0.0)), &plane);
        assert_eq!(e.status, SurfaceStatus::NoIntersection);
        let e = gaze_point_on_surface(&h, &Unit::new_normalize(Vec3::new(0.0, 0.0, 1.0)), &plane);
        assert_eq!(e.status, SurfaceStatus::AwayFromPlane);
    }

    #[test]
    fn ground_truth_examples() {
        let plane = PlanePose::new(RigidTransform::identity());
        let d = ground_truth_direction(&head(Vec3::new(0.0, 0.0, 0.5)), &plane, &Vec3::zeros()).unwrap();
        assert_relative_eq!(d.into_inner(), Vec3::new(0.0, 0.0, -1.0));
        let d = ground_truth_direction(&head(Vec3::new(0.3, 0.0, 0.4)), &plane, &Vec3::zeros()).unwrap();
        assert_relative_eq!(d.into_inner(), Vec3::new(-0.6, 0.0, -0.8), epsilon = 1e-15);
        assert!(matches!(
            ground_truth_direction(&head(Vec3::zeros()), &plane, &Vec3::zeros()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn offset_inverse_round_trips() {
        let h = head(Vec3::new(0.1, -0.05, 0.7));
        let d = Unit::new_normalize(Vec3::new(0.2, 0.5, -0.6));
        let angles = camera_offset_angles(&d, &h);
        let c = correct_gaze_to_camera_frame(
            &GazePrediction {
                angles,
                ..pred(0.0, 0.0, GazeConvention::CameraOffset)
            },
            &h,
        );
        assert!((c.direction.into_inner() - d.into_inner()).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn ground_truth_ray_hits_target(
            hx in -0.3..0.3f64, hy in -0.3..0.3f64, hz in 0.2..0.8f64,
            tx in -0.3..0.3f64, ty in -0.3..0.3f64,
            ax in -0.5..0.5f64, ay in -0.5..0.5f64, az in -3.0..3.0f64,
            ox in -0.5..0.5f64, oy in -0.5..0.5f64, oz in 0.2..1.0f64,
        ) {
            // plane pose: camera_from_plane places the plane in front of the camera
            let camera_from_plane = RigidTransform::new(
                Rotation::from_scaled_axis(Vec3::new(ax, ay, az)),
                Vec3::new(ox, oy, oz),
            );
            let plane = PlanePose::new(camera_from_plane.inverse());
            let head_cc = camera_from_plane.transform_point(&Vec3::new(hx, hy, hz));
            let h = head(head_cc);
            let target = Vec3::new(tx, ty, 0.0);
            let d = ground_truth_direction(&h, &plane, &target).unwrap();
            let e = gaze_point_on_surface(&h, &d, &plane);
            prop_assert_eq!(e.status, SurfaceStatus::Ok);
            prop_assert!((e.point - target).norm() < 1e-9);
        }

        #[test]
        fn status_matches_geometry(dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in -1.0..1.0f64, hz in 1e-3..0.5f64) {
            prop_assume!(dx * dx + dy * dy + dz * dz > 1e-3 && dz.abs() > 1e-3);
            let plane = PlanePose::new(RigidTransform::identity());
            let h = head(Vec3::new(0.0, 0.0, hz));
            let d = Unit::new_normalize(Vec3::new(dx, dy, dz));
            let e = gaze_point_on_surface(&h, &d, &plane);
            prop_assert_eq!(e.is_ok(), d.z < 0.0);
        }
    }
}
