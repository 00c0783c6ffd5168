//! Stereo gaze geometry on a shared planar workspace.
//!
//! Calibrate a two-camera rig from checkerboard corners, locate the work
//! surface from a displayed grid, triangulate head positions, turn
//! network yaw/pitch predictions into points on the surface and score
//! them against known targets.

pub mod calibration;
pub mod error;
pub mod gaze;
pub mod geom;
pub mod io;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod plane_pose;
pub mod reconstruction;
pub mod synthetic;

pub use calibration::{CalibrationResult, CameraId, CornerObservation, StereoRig};
pub use error::{Error, Result};
pub use gaze::{GazeConvention, GazePrediction, SurfaceGazeEstimate};
pub use geom::{CameraIntrinsics, Distortion, Frame, GazeRay, RigidTransform, UnitVec3, Vec3, YawPitch};
pub use metrics::{EvalRecord, MetricsSummary};
pub use pipeline::{evaluate, EvalInputs, EvalOutput, FrameMeta, MethodSpec};
pub use plane_pose::{GridConfig, PlanePose};
pub use reconstruction::{FaceObservation, HeadPoint, HeadSource};
