use gazeplane::calibration::{calibrate_camera, calibrate_rig, CalibrationOptions};
use gazeplane::geom::rotation_distance;
use gazeplane::synthetic::{generate_scene, perturb, NoiseSpec, SceneSpec};
use gazeplane::{CameraId, Error};

fn corner_noise(sigma: f64) -> NoiseSpec {
    NoiseSpec {
        corner_px_sigma: sigma,
        ..Default::default()
    }
}

#[test]
fn noiseless_views_recover_the_rig() {
    let spec = SceneSpec::tabletop(0, 3);
    let data = generate_scene(&spec).unwrap();
    let image = spec.rig.left.image_size;
    let cal = calibrate_rig(&data.calibration_corners, &spec.board, image, &CalibrationOptions::default()).unwrap();

    for (got, want) in [(&cal.rig.left, &spec.rig.left), (&cal.rig.right, &spec.rig.right)] {
        for (a, b) in [(got.fx, want.fx), (got.fy, want.fy), (got.cx, want.cx), (got.cy, want.cy)] {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let (da, db) = (got.dist.as_array(), want.dist.as_array());
        for i in 0..5 {
            assert!((da[i] - db[i]).abs() < 1e-8, "{da:?} vs {db:?}");
        }
    }
    assert!(cal.left.rms_reprojection < 1e-8);
    assert!(cal.right.rms_reprojection < 1e-8);
    let truth = &spec.rig.right_from_left;
    assert!(rotation_distance(&cal.rig.right_from_left.rotation, &truth.rotation) < 1e-9);
    assert!((cal.rig.right_from_left.translation - truth.translation).norm() < 1e-8);
}

#[test]
fn noisy_views_stay_within_tolerance() {
    let spec = SceneSpec::tabletop(0, 11);
    let clean = generate_scene(&spec).unwrap();
    let data = perturb(&clean, &corner_noise(0.2), 5).unwrap();
    let image = spec.rig.left.image_size;
    let cal = calibrate_rig(&data.calibration_corners, &spec.board, image, &CalibrationOptions::default()).unwrap();

    assert!((cal.rig.left.fx / spec.rig.left.fx - 1.0).abs() < 0.01);
    assert!((cal.rig.left.fy / spec.rig.left.fy - 1.0).abs() < 0.01);
    assert!((cal.rig.right.fx / spec.rig.right.fx - 1.0).abs() < 0.01);
    assert!((0.15..=0.25).contains(&cal.left.rms_reprojection), "{}", cal.left.rms_reprojection);
    assert!((cal.rig.baseline() / spec.rig.baseline() - 1.0).abs() < 0.01);
    for rms in cal.left.per_view_rms.values() {
        assert!(*rms < 0.5);
    }
}

#[test]
fn one_view_is_ill_conditioned() {
    let mut spec = SceneSpec::tabletop(0, 1);
    spec.calibration_views = 1;
    let data = generate_scene(&spec).unwrap();
    let image = spec.rig.left.image_size;
    let err = calibrate_camera(
        &data.calibration_corners,
        CameraId::Left,
        &spec.board,
        image,
        &CalibrationOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::IllConditioned(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn releasing_skew_keeps_it_near_zero() {
    let spec = SceneSpec::tabletop(0, 2);
    let data = generate_scene(&spec).unwrap();
    let image = spec.rig.left.image_size;
    let options = CalibrationOptions {
        fix_skew: false,
        ..Default::default()
    };
    let cal = calibrate_camera(&data.calibration_corners, CameraId::Left, &spec.board, image, &options).unwrap();
    assert!(cal.intrinsics.skew.abs() < 1e-6);
    assert!((cal.intrinsics.fx - spec.rig.left.fx).abs() < 1e-6);
}
