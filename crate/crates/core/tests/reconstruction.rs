use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use gazeplane::reconstruction::{head_point, triangulate_midpoint};
use gazeplane::{CameraId, CameraIntrinsics, Distortion, FaceObservation, HeadSource, RigidTransform, StereoRig, Vec3};

fn rig() -> StereoRig {
    let k = CameraIntrinsics::new(700.0, 700.0, 640.0, 360.0, (1280, 720));
    StereoRig {
        left: k.with_distortion(Distortion {
            k1: -0.1,
            k2: 0.02,
            ..Default::default()
        }),
        right: k,
        right_from_left: RigidTransform::new(
            gazeplane::geom::Rotation::from_euler_angles(0.01, -0.03, 0.005),
            Vec3::new(-0.06, 0.001, 0.0),
        ),
    }
}

fn project(rig: &StereoRig, p: &Vec3) -> (Vector2<f64>, Vector2<f64>) {
    (
        rig.left.project(p).unwrap(),
        rig.right.project(&rig.right_from_left.transform_point(p)).unwrap(),
    )
}

#[test]
fn noiseless_point_is_recovered() {
    let rig = rig();
    let p = Vec3::new(0.1, -0.05, 0.6);
    let (l, r) = project(&rig, &p);
    let (q, gap) = triangulate_midpoint(&rig, l, r).unwrap();
    assert!((q - p).norm() < 1e-8);
    assert!(gap < 1e-9);
}

#[test]
fn half_pixel_noise_stays_under_a_centimeter() {
    let rig = rig();
    let p = Vec3::new(0.05, 0.02, 0.6);
    let (l, r) = project(&rig, &p);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut errors: Vec<f64> = (0..100)
        .map(|_| {
            let mut noise = || Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
            let (q, _) = triangulate_midpoint(&rig, l + noise(), r + noise()).unwrap();
            (q - p).norm()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = (errors[49] + errors[50]) / 2.0;
    assert!(median < 0.01, "median error {median} m");
}

#[test]
fn swapping_cameras_gives_the_same_point() {
    let rig = rig();
    let swapped = StereoRig {
        left: rig.right,
        right: rig.left,
        right_from_left: rig.right_from_left.inverse(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let p = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.15..0.15), rng.random_range(0.4..1.0));
        let (l, r) = project(&rig, &p);
        let shift = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (a, gap_a) = triangulate_midpoint(&rig, l, r + shift).unwrap();
        let (b, gap_b) = triangulate_midpoint(&swapped, r + shift, l).unwrap();
        let b_in_left = rig.right_from_left.inverse().transform_point(&b);
        assert!((a - b_in_left).norm() < 1e-9);
        assert!((gap_a - gap_b).abs() < 1e-9);
    }
}

#[test]
fn depth_falls_as_disparity_grows() {
    let k = CameraIntrinsics::new(700.0, 700.0, 640.0, 360.0, (1280, 720));
    let rig = StereoRig {
        left: k,
        right: k,
        right_from_left: RigidTransform::from_translation(Vec3::new(-0.06, 0.0, 0.0)),
    };
    let right = Vector2::new(600.0, 380.0);
    let mut last = f64::INFINITY;
    for step in 1..40 {
        let left = right + Vector2::new(2.0 * step as f64, 0.0);
        let (p, _) = triangulate_midpoint(&rig, left, right).unwrap();
        assert!(p.z < last);
        last = p.z;
    }
}

#[test]
fn head_from_bbox_centers() {
    let rig = rig();
    let head = Vec3::new(-0.04, 0.08, 0.55);
    let (l, r) = project(&rig, &head);
    let face = |camera, c: Vector2<f64>| FaceObservation {
        frame_id: "f".into(),
        camera,
        bbox: Some([c.x - 40.0, c.y - 55.0, c.x + 40.0, c.y + 55.0]),
        eye_midpoint: None,
    };
    let (fl, fr) = (face(CameraId::Left, l), face(CameraId::Right, r));
    let hp = head_point(Some(&fl), Some(&fr), &rig, HeadSource::EyeMidpoint).unwrap();
    assert_eq!(hp.source, HeadSource::BboxCenter);
    assert!((hp.position - head).norm() < 1e-8);
    assert!(head_point(Some(&fl), None, &rig, HeadSource::BboxCenter).is_err());
}
