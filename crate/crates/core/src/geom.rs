//! Shared geometric substrate: frames, rigid transforms, gaze angles,
//! the pinhole camera with radial-tangential distortion, and ray-plane
//! intersection.
//!
//! # Conventions
//!
//! - Camera frames are +X right, +Y down, +Z forward.
//! - A gaze of yaw = pitch = 0 points straight back at the camera, i.e.
//!   along -Z. Positive pitch looks up (towards -Y).
//! - Angles are radians internally; reporting converts to degrees.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Rotation = Rotation3<f64>;

/// Coordinate frame a ray or point is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Left camera frame.
    Camera,
    /// Workspace frame; the work surface is `z = 0`.
    Plane,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Camera => f.write_str("camera"),
            Frame::Plane => f.write_str("plane"),
        }
    }
}

/// Rotation followed by translation: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "TransformRepr", try_from = "TransformRepr")]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Left-multiplies an axis-angle increment: `exp(ω) R`, `t + δt`.
    pub fn perturbed(&self, omega: &Vec3, dt: &Vec3) -> Self {
        Self::new(
            Rotation::from_scaled_axis(*omega) * self.rotation,
            self.translation + dt,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.matrix().iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

/// On-disk form: row-major rotation matrix and translation in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let m = t.rotation.matrix();
        Self {
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = String;

    fn try_from(r: TransformRepr) -> std::result::Result<Self, String> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        let t = Vec3::from(r.translation);
        if !m.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err("transform has non-finite entries".into());
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        if ortho > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(format!("rotation is not orthonormal (deviation {ortho:.2e})"));
        }
        Ok(Self::new(Rotation::from_matrix_unchecked(m), t))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// A rigid transform tagged with the frames it maps between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub transform: RigidTransform,
    pub source: Frame,
    pub target: Frame,
}

/// Closest rotation (Frobenius sense) to an arbitrary 3x3 matrix.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Rotation {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    Rotation::from_matrix_unchecked(u * fix * v_t)
}

/// Geodesic distance between two rotations, in radians.
pub fn rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    // ‖R − I‖_F = 2√2·sin(θ/2) stays accurate near θ = 0, unlike the trace
    let d = (a.inverse() * b).into_inner() - Matrix3::identity();
    2.0 * (d.norm() / (2.0 * std::f64::consts::SQRT_2)).min(1.0).asin()
}

/// Yaw and pitch of a gaze, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct YawPitch {
    pub yaw: f64,
    pub pitch: f64,
}

impl YawPitch {
    pub fn new(yaw: f64, pitch: f64) -> Self {
        Self { yaw, pitch }
    }

    pub fn from_degrees(yaw: f64, pitch: f64) -> Self {
        Self::new(yaw.to_radians(), pitch.to_radians())
    }

    pub fn to_degrees(self) -> (f64, f64) {
        (self.yaw.to_degrees(), self.pitch.to_degrees())
    }
}

impl std::ops::Add for YawPitch {
    type Output = YawPitch;
    fn add(self, rhs: YawPitch) -> YawPitch {
        YawPitch::new(self.yaw + rhs.yaw, self.pitch + rhs.pitch)
    }
}

impl std::ops::Sub for YawPitch {
    type Output = YawPitch;
    fn sub(self, rhs: YawPitch) -> YawPitch {
        YawPitch::new(self.yaw - rhs.yaw, self.pitch - rhs.pitch)
    }
}

pub fn yaw_pitch_to_dir(angles: YawPitch) -> UnitVec3 {
    let (sy, cy) = angles.yaw.sin_cos();
    let (sp, cp) = angles.pitch.sin_cos();
    Unit::new_normalize(Vec3::new(-cp * sy, -sp, -cp * cy))
}

/// Inverse of [`yaw_pitch_to_dir`], with yaw in (-π, π] and pitch in
/// [-π/2, π/2]. Straight up or down has no defined yaw and reports 0.
pub fn dir_to_yaw_pitch(d: &UnitVec3) -> YawPitch {
    let h = d.x.hypot(d.z);
    let pitch = (-d.y).atan2(h);
    let yaw = if h < 1e-12 { 0.0 } else { (-d.x).atan2(-d.z) };
    YawPitch::new(yaw, pitch)
}

/// Like [`dir_to_yaw_pitch`] but lets pitch continue below -90° for gaze
/// that looks down and away from the camera, instead of flipping yaw by
/// 180°. Used for plotting distributions.
pub fn dir_to_yaw_pitch_continuous(d: &UnitVec3) -> YawPitch {
    let h = d.x.hypot(d.z);
    if d.z > 0.0 && d.y > 0.0 && h >= 1e-12 {
        YawPitch::new(d.x.atan2(d.z), (-d.y).atan2(-h))
    } else {
        dir_to_yaw_pitch(d)
    }
}

/// Angle between two unit directions, in degrees.
pub fn angular_error(d_est: &UnitVec3, d_gt: &UnitVec3) -> f64 {
    d_est.cross(d_gt).norm().atan2(d_est.dot(d_gt)).to_degrees()
}

/// Half-line `origin + λ direction`, `λ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeRay {
    pub origin: Vec3,
    pub direction: UnitVec3,
    pub frame: Frame,
}

impl GazeRay {
    pub fn new(origin: Vec3, direction: UnitVec3, frame: Frame) -> Self {
        Self {
            origin,
            direction,
            frame,
        }
    }

    pub fn at(&self, lambda: f64) -> Vec3 {
        self.origin + self.direction.into_inner() * lambda
    }

    /// Distance from `p` to the infinite line carrying the ray.
    pub fn line_distance(&self, p: &Vec3) -> f64 {
        (p - self.origin).cross(&self.direction).norm()
    }
}

pub fn transform_ray(t: &FrameTransform, ray: &GazeRay) -> Result<GazeRay> {
    if ray.frame != t.source {
        return Err(Error::FrameMismatch {
            expected: t.source,
            found: ray.frame,
        });
    }
    let origin = t.transform.transform_point(&ray.origin);
    let direction = Unit::new_normalize(t.transform.transform_vector(&ray.direction));
    Ok(GazeRay::new(origin, direction, t.target))
}

/// Intersects a plane-frame ray with `z = 0`. Returns the point and the
/// ray parameter `alpha = -origin.z / direction.z`.
pub fn intersect_ray_plane_z0(ray: &GazeRay) -> Result<(Vec3, f64)> {
    if ray.frame != Frame::Plane {
        return Err(Error::FrameMismatch {
            expected: Frame::Plane,
            found: ray.frame,
        });
    }
    let dz = ray.direction.z;
    if dz.abs() < 1e-12 {
        return Err(Error::NoIntersection);
    }
    let alpha = -ray.origin.z / dz;
    if alpha <= 0.0 {
        return Err(Error::GazeAwayFromPlane { alpha });
    }
    let mut point = ray.at(alpha);
    // exact by construction; removes rounding residue
    point.z = 0.0;
    Ok((point, alpha))
}

/// Radial-tangential (Brown-Conrady) coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|c| *c == 0.0)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            k1: c[0],
            k2: c[1],
            p1: c[2],
            p2: c[3],
            k3: c[4],
        }
    }

    /// Maps undistorted normalized coordinates to distorted ones.
    pub fn apply(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy = x * y;
        Vector2::new(
            x * radial + 2.0 * self.p1 * xy + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * xy,
        )
    }
}

/// Maximum fixed-point iterations when inverting the distortion model.
pub const UNDISTORT_MAX_ITERS: usize = 50;
/// Convergence tolerance in normalized image coordinates.
pub const UNDISTORT_TOL: f64 = 1e-10;

/// Pinhole intrinsics plus lens distortion of a single camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    pub dist: Distortion,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image_size: (u32, u32)) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
            dist: Distortion::none(),
            image_size,
        }
    }

    pub fn with_distortion(mut self, dist: Distortion) -> Self {
        self.dist = dist;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew]
            .iter()
            .chain(self.dist.as_array().iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::field("intrinsics", "non-finite parameter"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::field("fx/fy", "focal lengths must be positive"));
        }
        if !(0.0..w as f64).contains(&self.cx) || !(0.0..h as f64).contains(&self.cy) {
            return Err(Error::field(
                "cx/cy",
                "principal point must lie inside the image",
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Distorted normalized coordinates to pixels.
    pub fn normalized_to_pixel(&self, p: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x + self.skew * p.y + self.cx,
            self.fy * p.y + self.cy,
        )
    }

    /// Pixels to distorted normalized coordinates.
    pub fn pixel_to_normalized(&self, px: Vector2<f64>) -> Vector2<f64> {
        let y = (px.y - self.cy) / self.fy;
        let x = (px.x - self.cx - self.skew * y) / self.fx;
        Vector2::new(x, y)
    }

    /// Projects a camera-frame point.
    pub fn project(&self, p: &Vec3) -> Result<Vector2<f64>> {
        if p.z <= 1e-9 {
            return Err(Error::BehindCamera { z: p.z });
        }
        let n = Vector2::new(p.x / p.z, p.y / p.z);
        Ok(self.normalized_to_pixel(self.dist.apply(n)))
    }

    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        let (w, h) = self.image_size;
        px.x >= 0.0 && px.y >= 0.0 && px.x < w as f64 && px.y < h as f64
    }
}

/// Projects world point `x` seen by a camera at `pose` (camera_from_world).
pub fn project_point(
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    x: &Vec3,
) -> Result<Vector2<f64>> {
    k.project(&pose.transform_point(x))
}

/// Removes lens distortion from a pixel, returning undistorted normalized
/// coordinates. Inverts the distortion by fixed-point iteration.
pub fn undistort_pixel(k: &CameraIntrinsics, pixel: Vector2<f64>) -> Result<Vector2<f64>> {
    let distorted = k.pixel_to_normalized(pixel);
    if k.dist.is_zero() {
        return Ok(distorted);
    }
    let d = &k.dist;
    let mut p = distorted;
    for _ in 0..UNDISTORT_MAX_ITERS {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
        let dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
        let dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
        let next = Vector2::new((distorted.x - dx) / radial, (distorted.y - dy) / radial);
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let step = (next - p).norm();
        p = next;
        if step < UNDISTORT_TOL {
            return Ok(p);
        }
    }
    Err(Error::NotInvertible {
        u: pixel.x,
        v: pixel.y,
    })
}
