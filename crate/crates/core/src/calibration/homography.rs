use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geom::{nearest_rotation, CameraIntrinsics, RigidTransform};

/// Isotropic normalization: centroid to origin, mean distance √2.
fn normalizing_transform(points: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(Error::DegenerateConfiguration(
            "points coincide".to_string(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s, 0.0, -s * centroid.x, //
        0.0, s, -s * centroid.y, //
        0.0, 0.0, 1.0,
    ))
}

fn apply_h(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Ratio of the smallest to largest principal spread of a point set.
fn spread_ratio(points: &[Vector2<f64>]) -> f64 {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let hi = tr / 2.0 + disc;
    let lo = tr / 2.0 - disc;
    if hi <= 0.0 {
        0.0
    } else {
        lo.max(0.0) / hi
    }
}

/// Normalized direct linear transform from plane points to pixels.
///
/// The result maps `(x, y, 1)` to homogeneous pixels and is scaled so
/// that `H[(2, 2)] = 1` whenever that entry is non-zero.
pub fn estimate_homography(correspondences: &[(Vector2<f64>, Vector2<f64>)]) -> Result<Matrix3<f64>> {
    if correspondences.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "homography needs at least 4 correspondences, got {}",
            correspondences.len()
        )));
    }
    let src: Vec<_> = correspondences.iter().map(|c| c.0).collect();
    let dst: Vec<_> = correspondences.iter().map(|c| c.1).collect();
    let t_src = normalizing_transform(&src)?;
    let t_dst = normalizing_transform(&dst)?;
    let src_n: Vec<_> = src.iter().map(|p| apply_h(&t_src, p)).collect();
    let dst_n: Vec<_> = dst.iter().map(|p| apply_h(&t_dst, p)).collect();
    if spread_ratio(&src_n) < 1e-10 || spread_ratio(&dst_n) < 1e-10 {
        return Err(Error::DegenerateConfiguration(
            "correspondences are collinear".to_string(),
        ));
    }

    let rows = (2 * correspondences.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::SolverFailure("svd failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[8]];
    if second <= 1e-10 * largest {
        return Err(Error::DegenerateConfiguration(
            "homography design matrix is rank deficient".to_string(),
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("singular normalization".into()))?;
    let mut out = t_dst_inv * hn * t_src;
    if out[(2, 2)].abs() > 1e-12 {
        out /= out[(2, 2)];
    } else {
        out /= out.norm();
    }
    Ok(out)
}

/// Recovers camera_from_plane from a plane-to-pixel homography.
pub fn pose_from_homography(k: &CameraIntrinsics, h: &Matrix3<f64>) -> Result<RigidTransform> {
    pose_from_homography_matrix(&k.matrix(), h)
}

pub(crate) fn pose_from_homography_matrix(
    k: &Matrix3<f64>,
    h: &Matrix3<f64>,
) -> Result<RigidTransform> {
    let k_inv = k
        .try_inverse()
        .ok_or_else(|| Error::InvalidPose("singular camera matrix".into()))?;
    let a = k_inv * h;
    let a1 = a.column(0).into_owned();
    let a2 = a.column(1).into_owned();
    let a3 = a.column(2).into_owned();
    let norm1 = a1.norm();
    if !(norm1 > 0.0) || !norm1.is_finite() {
        return Err(Error::InvalidPose("homography has a null column".into()));
    }
    let mut scale = 1.0 / norm1;
    if a3.z * scale < 0.0 {
        scale = -scale;
    }
    let r1 = a1 * scale;
    let r2 = a2 * scale;
    let t = a3 * scale;
    if !(t.z > 1e-9) {
        return Err(Error::InvalidPose(format!(
            "plane is not in front of the camera (t.z = {})",
            t.z
        )));
    }
    let r3 = r1.cross(&r2);
    let m = Matrix3::from_columns(&[r1, r2, r3]);
    let rotation = nearest_rotation(&m);
    Ok(RigidTransform::new(rotation, t))
}
