//! The display grid in the workspace frame and the camera-to-workspace
//! transform estimated from its detected corners.
//!
//! Corner `(i, j)` is row `i`, column `j`, counted from the top-left corner
//! listed in the corner file, and sits at `(s·i, s·j, 0)`.

use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::calibration::{estimate_homography, pose_from_homography_matrix};
use crate::error::{Error, Result};
use crate::geom::{undistort_pixel, CameraIntrinsics, Frame, FrameTransform, RigidTransform, Vec3};
use crate::lm::{self, LeastSquaresProblem, LmConfig};

/// Square grid on the work surface with numbered target squares.
///
/// `rows` and `cols` count squares, so corner indices run over
/// `0..=rows` and `0..=cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Edge length of one square in meters.
    pub square_size: f64,
    pub rows: u32,
    pub cols: u32,
    /// target id → (row, column) of its square.
    #[serde(default, with = "target_list")]
    pub targets: BTreeMap<u32, (u32, u32)>,
}

/// Targets are stored as a list of `{id, row, col}` objects.
mod target_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Target {
        id: u32,
        row: u32,
        col: u32,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<u32, (u32, u32)>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Target> = m.iter().map(|(&id, &(row, col))| Target { id, row, col }).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, (u32, u32)>, D::Error> {
        let list = Vec::<Target>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for t in list {
            if out.insert(t.id, (t.row, t.col)).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate target id {}", t.id)));
            }
        }
        Ok(out)
    }
}

impl GridConfig {
    pub fn new(square_size: f64, rows: u32, cols: u32) -> Self {
        Self {
            square_size,
            rows,
            cols,
            targets: BTreeMap::new(),
        }
    }

    /// 4×10 display of 6 cm squares with targets 1..=20 on alternating
    /// squares, numbered row by row.
    pub fn default_display() -> Self {
        let mut g = Self::new(0.06, 4, 10);
        let mut id = 1;
        for i in 0..g.rows {
            for j in 0..g.cols {
                if (i + j) % 2 == 0 {
                    g.targets.insert(id, (i, j));
                    id += 1;
                }
            }
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.square_size > 0.0) || !self.square_size.is_finite() {
            return Err(Error::field("square_size", "must be a positive number of meters"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::field("rows/cols", "grid needs at least one square"));
        }
        for (id, &(i, j)) in &self.targets {
            if i >= self.rows || j >= self.cols {
                return Err(Error::field(
                    "targets",
                    format!("target {id} cell ({i}, {j}) is outside the {}x{} grid", self.rows, self.cols),
                ));
            }
        }
        Ok(())
    }

    pub fn contains_corner(&self, (i, j): (u32, u32)) -> bool {
        i <= self.rows && j <= self.cols
    }

    pub fn corner_point(&self, index: (u32, u32)) -> Result<Vec3> {
        if !self.contains_corner(index) {
            return Err(Error::field(
                "grid_index",
                format!("corner {index:?} is outside the {}x{} grid", self.rows, self.cols),
            ));
        }
        Ok(Vec3::new(
            self.square_size * index.0 as f64,
            self.square_size * index.1 as f64,
            0.0,
        ))
    }

    pub fn num_corners(&self) -> usize {
        ((self.rows + 1) * (self.cols + 1)) as usize
    }
}

/// Workspace coordinates of every grid corner.
pub fn grid_points(config: &GridConfig) -> BTreeMap<(u32, u32), Vec3> {
    let s = config.square_size;
    (0..=config.rows)
        .flat_map(|i| (0..=config.cols).map(move |j| ((i, j), Vec3::new(s * i as f64, s * j as f64, 0.0))))
        .collect()
}

/// Center of a numbered target square.
pub fn target_center(config: &GridConfig, target_id: u32) -> Result<Vec3> {
    let &(i, j) = config
        .targets
        .get(&target_id)
        .ok_or(Error::UnknownTarget(target_id))?;
    let s = config.square_size;
    Ok(Vec3::new(s * (i as f64 + 0.5), s * (j as f64 + 0.5), 0.0))
}

/// Camera-to-workspace transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePose {
    /// Maps left-camera coordinates into the workspace frame.
    pub transform: RigidTransform,
    pub rms_reprojection: f64,
}

impl PlanePose {
    pub fn new(transform: RigidTransform) -> Self {
        Self {
            transform,
            rms_reprojection: 0.0,
        }
    }

    pub fn camera_to_plane(&self) -> FrameTransform {
        FrameTransform {
            transform: self.transform,
            source: Frame::Camera,
            target: Frame::Plane,
        }
    }

    pub fn plane_to_camera(&self) -> FrameTransform {
        FrameTransform {
            transform: self.transform.inverse(),
            source: Frame::Plane,
            target: Frame::Camera,
        }
    }
}

struct PlaneProblem<'a> {
    k: &'a CameraIntrinsics,
    points: Vec<Vec3>,
    pixels: Vec<Vector2<f64>>,
}

impl LeastSquaresProblem for PlaneProblem<'_> {
    type State = RigidTransform;

    fn num_params(&self) -> usize {
        6
    }

    fn residuals(&self, pose: &RigidTransform) -> DVector<f64> {
        let mut out = DVector::zeros(2 * self.points.len());
        for (n, (p, px)) in self.points.iter().zip(&self.pixels).enumerate() {
            match self.k.project(&pose.transform_point(p)) {
                Ok(q) => {
                    out[2 * n] = q.x - px.x;
                    out[2 * n + 1] = q.y - px.y;
                }
                Err(_) => {
                    out[2 * n] = 1e6;
                    out[2 * n + 1] = 1e6;
                }
            }
        }
        out
    }

    fn retract(&self, pose: &RigidTransform, d: &DVector<f64>) -> RigidTransform {
        pose.perturbed(&Vec3::new(d[0], d[1], d[2]), &Vec3::new(d[3], d[4], d[5]))
    }
}

/// Estimates the camera-to-workspace transform from detected grid corners.
///
/// The result is independent of the order of `corners`.
pub fn estimate_plane_pose(
    corners: &[((u32, u32), Vector2<f64>)],
    config: &GridConfig,
    k: &CameraIntrinsics,
) -> Result<PlanePose> {
    config.validate()?;
    k.validate()?;
    let mut sorted = corners.to_vec();
    sorted.sort_by_key(|c| c.0);
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::field("grid_index", "duplicate corner in plane corner list"));
    }
    let mut points = Vec::with_capacity(sorted.len());
    let mut normalized = Vec::with_capacity(sorted.len());
    for (idx, px) in &sorted {
        let p = config.corner_point(*idx)?;
        normalized.push((Vector2::new(p.x, p.y), undistort_pixel(k, *px)?));
        points.push(p);
    }
    let h = estimate_homography(&normalized)?;
    let init = pose_from_homography_matrix(&Matrix3::identity(), &h)?;

    let problem = PlaneProblem {
        k,
        points,
        pixels: sorted.iter().map(|c| c.1).collect(),
    };
    let report = lm::minimize(&problem, init, &LmConfig::default());
    if !report.termination.converged() {
        return Err(Error::SolverFailure(format!(
            "plane pose refinement stalled after {} iterations",
            report.iterations
        )));
    }
    let camera_from_plane = report.state;
    if camera_from_plane.translation.z <= 0.0 {
        return Err(Error::InvalidPose("plane is behind the camera".into()));
    }
    Ok(PlanePose {
        transform: camera_from_plane.inverse(),
        rms_reprojection: report.rms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_point_formula() {
        let g = GridConfig::new(0.05, 4, 5);
        let pts = grid_points(&g);
        assert_eq!(pts[&(0, 0)], Vec3::zeros());
        assert_eq!(pts[&(2, 3)], Vec3::new(0.05 * 2.0, 0.05 * 3.0, 0.0));
        assert!((pts[&(2, 3)] - Vec3::new(0.10, 0.15, 0.0)).norm() < 1e-15);
        assert!(pts.values().all(|p| p.z == 0.0));
        assert_eq!(pts.len(), g.num_corners());
    }

    #[test]
    fn target_centers() {
        let mut g = GridConfig::new(0.05, 4, 5);
        g.targets.insert(1, (0, 0));
        g.targets.insert(2, (2, 3));
        assert!((target_center(&g, 1).unwrap() - Vec3::new(0.025, 0.025, 0.0)).norm() < 1e-15);
        assert!((target_center(&g, 2).unwrap() - Vec3::new(0.125, 0.175, 0.0)).norm() < 1e-15);
        let d = GridConfig::default_display();
        assert_eq!(d.targets.len(), 20);
        assert!(matches!(target_center(&d, 21), Err(Error::UnknownTarget(21))));
    }

    #[test]
    fn target_centers_inside_grid() {
        let g = GridConfig::default_display();
        g.validate().unwrap();
        for id in g.targets.keys() {
            let c = target_center(&g, *id).unwrap();
            assert!(c.x > 0.0 && c.x < g.square_size * g.rows as f64);
            assert!(c.y > 0.0 && c.y < g.square_size * g.cols as f64);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(GridConfig::new(0.0, 2, 2).validate().is_err());
        let mut g = GridConfig::new(0.05, 2, 2);
        g.targets.insert(1, (2, 0));
        assert!(matches!(g.validate(), Err(Error::InvalidField { .. })));
    }
}
