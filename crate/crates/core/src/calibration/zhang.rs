//! Closed-form intrinsics from plane homographies (absolute conic constraints).

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::geom::CameraIntrinsics;

/// Largest accepted ratio between the biggest and the second-smallest
/// singular value of the constraint system.
pub const MAX_CONDITION: f64 = 1e8;

/// Row `v_ij` of the constraint `h_iᵀ B h_j` for `b = [B11 B12 B22 B13 B23 B33]`.
fn v_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let hi = h.column(i);
    let hj = h.column(j);
    [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Estimates intrinsics from plane-to-pixel homographies of distinct
/// board orientations. Distortion is returned as zero.
///
/// With `fix_skew` the skew is constrained to zero and two views suffice;
/// otherwise at least three are needed.
pub fn intrinsics_from_homographies(
    homographies: &[Matrix3<f64>],
    image_size: (u32, u32),
    fix_skew: bool,
) -> Result<CameraIntrinsics> {
    let unknowns = if fix_skew { 5 } else { 6 };
    let rows = 2 * homographies.len();
    if rows < unknowns - 1 {
        return Err(Error::IllConditioned(format!(
            "{} view(s) cannot constrain the intrinsics; need at least {}",
            homographies.len(),
            if fix_skew { 2 } else { 3 }
        )));
    }

    // Pixel normalization keeps the constraint rows comparably scaled.
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    let s = w.max(h).max(1.0);
    let norm = Matrix3::new(
        1.0 / s, 0.0, -w / (2.0 * s), //
        0.0, 1.0 / s, -h / (2.0 * s), //
        0.0, 0.0, 1.0,
    );

    let cols: Vec<usize> = if fix_skew {
        vec![0, 2, 3, 4, 5]
    } else {
        (0..6).collect()
    };
    let mut a = DMatrix::<f64>::zeros(rows.max(unknowns), unknowns);
    for (k, hm) in homographies.iter().enumerate() {
        let mut hn = norm * hm;
        let f = hn.norm();
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::DegenerateConfiguration(format!(
                "homography {k} is not finite"
            )));
        }
        hn /= f;
        let v12 = v_row(&hn, 0, 1);
        let v11 = v_row(&hn, 0, 0);
        let v22 = v_row(&hn, 1, 1);
        for (c, &src) in cols.iter().enumerate() {
            a[(2 * k, c)] = v12[src];
            a[(2 * k + 1, c)] = v11[src] - v22[src];
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::SolverFailure("svd failed".into()))?;
    let mut order: Vec<usize> = (0..unknowns).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[unknowns - 1]];
    let second = svd.singular_values[order[1]];
    let ratio = largest / second;
    if !(ratio <= MAX_CONDITION) {
        return Err(Error::IllConditioned(format!(
            "board orientations are too similar (condition ratio {ratio:.3e})"
        )));
    }
    let sol = v_t.row(order[0]);
    let mut b = [0.0; 6];
    for (c, &dst) in cols.iter().enumerate() {
        b[dst] = sol[c];
    }
    if b[0] < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let [b11, b12, b22, b13, b23, b33] = b;

    let den = b11 * b22 - b12 * b12;
    if !(den > 0.0) || !(b11 > 0.0) {
        return Err(Error::IllConditioned(
            "absolute conic estimate is not positive definite".into(),
        ));
    }
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(Error::IllConditioned(
            "absolute conic estimate is not positive definite".into(),
        ));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / den).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

    let kn = Matrix3::new(alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0);
    let k = norm
        .try_inverse()
        .expect("normalization is invertible")
        * kn;
    Ok(CameraIntrinsics {
        fx: k[(0, 0)],
        fy: k[(1, 1)],
        cx: k[(0, 2)],
        cy: k[(1, 2)],
        skew: if fix_skew { 0.0 } else { k[(0, 1)] },
        dist: Default::default(),
        image_size,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geom::{RigidTransform, Rotation, Vec3};

    fn truth() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 810.0, 320.0, 240.0, (640, 480))
    }

    fn homography(k: &CameraIntrinsics, pose: &RigidTransform) -> Matrix3<f64> {
        let r = pose.rotation.matrix();
        k.matrix()
            * Matrix3::from_columns(&[
                r.column(0).into_owned(),
                r.column(1).into_owned(),
                pose.translation,
            ])
    }

    fn random_poses(n: usize, seed: u64) -> Vec<RigidTransform> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let axis = Vec3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.3..0.3),
                );
                RigidTransform::new(
                    Rotation::from_scaled_axis(axis),
                    Vec3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(0.5..1.0),
                    ),
                )
            })
            .collect()
    }

    fn assert_close(got: &CameraIntrinsics, want: &CameraIntrinsics, tol: f64) {
        for (g, w) in [
            (got.fx, want.fx),
            (got.fy, want.fy),
            (got.cx, want.cx),
            (got.cy, want.cy),
        ] {
            assert!(((g - w) / w).abs() < tol, "{g} vs {w}");
        }
    }

    #[test]
    fn five_views_recover_intrinsics() {
        let k = truth();
        let hs: Vec<_> = random_poses(5, 1).iter().map(|p| homography(&k, p)).collect();
        let got = intrinsics_from_homographies(&hs, k.image_size, true).unwrap();
        assert_close(&got, &k, 1e-6);
        let got = intrinsics_from_homographies(&hs, k.image_size, false).unwrap();
        assert_close(&got, &k, 1e-6);
        assert!(got.skew.abs() < 1e-6);
    }

    #[test]
    fn two_views_suffice_without_skew() {
        let k = truth();
        let hs: Vec<_> = random_poses(2, 9).iter().map(|p| homography(&k, p)).collect();
        let got = intrinsics_from_homographies(&hs, k.image_size, true).unwrap();
        assert_close(&got, &k, 1e-6);
        assert!(matches!(
            intrinsics_from_homographies(&hs, k.image_size, false),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn parallel_views_are_ill_conditioned() {
        let k = truth();
        let r = Rotation::from_euler_angles(0.2, 0.1, 0.0);
        let hs: Vec<_> = [0.5, 0.7, 0.9]
            .iter()
            .map(|&z| homography(&k, &RigidTransform::new(r, Vec3::new(0.02, -0.01, z))))
            .collect();
        assert!(matches!(
            intrinsics_from_homographies(&hs, k.image_size, true),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn single_view_is_ill_conditioned() {
        let k = truth();
        let hs: Vec<_> = random_poses(1, 4).iter().map(|p| homography(&k, p)).collect();
        assert!(matches!(
            intrinsics_from_homographies(&hs, k.image_size, true),
            Err(Error::IllConditioned(_))
        ));
    }
}
