use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gazeplane::gaze::{correct_gaze_to_camera_frame, gaze_point_on_surface, ground_truth_direction};
use gazeplane::geom::angular_error;
use gazeplane::metrics::{yaw_pitch_histogram, HistogramBins};
use gazeplane::plane_pose::target_center;
use gazeplane::synthetic::{evaluate_with_truth, generate_scene, perturb, NoiseSpec, SceneSpec};
use gazeplane::{GazeConvention, GazePrediction, GazeRay, HeadPoint, HeadSource, Vec3, YawPitch};

fn head_at(position: Vec3) -> HeadPoint {
    HeadPoint {
        position,
        ray_gap: 0.0,
        source: HeadSource::EyeMidpoint,
    }
}

#[test]
fn zero_prediction_rays_hit_the_camera_center() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let pred = GazePrediction {
        frame_id: "f".into(),
        method_id: "m".into(),
        angles: YawPitch::default(),
        convention: GazeConvention::CameraOffset,
    };
    for _ in 0..100 {
        let head = head_at(Vec3::new(
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.3..0.3),
            rng.random_range(0.3..1.5),
        ));
        let corrected = correct_gaze_to_camera_frame(&pred, &head);
        let ray = GazeRay::new(head.position, corrected.direction, gazeplane::Frame::Camera);
        assert!(ray.line_distance(&Vec3::zeros()) < 1e-9);
        assert!(corrected.direction.dot(&-head.position) > 0.0);
    }
}

#[test]
fn perfect_predictions_land_on_their_targets() {
    let data = generate_scene(&SceneSpec::tabletop(60, 8)).unwrap();
    let spec = &data.spec;
    for (truth, pred) in data.truth.iter().zip(data.predictions.iter().filter(|p| p.method_id == spec.methods[0].id)) {
        assert_eq!(truth.meta.frame_id, pred.frame_id);
        let head = head_at(truth.head);
        let corrected = correct_gaze_to_camera_frame(pred, &head);
        let target = target_center(&spec.grid, truth.meta.target_id).unwrap();
        let gt = ground_truth_direction(&head, &spec.plane, &target).unwrap();
        assert!(angular_error(&corrected.direction, &gt) < 1e-9);
        let hit = gaze_point_on_surface(&head, &corrected.direction, &spec.plane);
        assert!(hit.is_ok());
        assert!((hit.point - target).norm() < 1e-9);
    }
}

#[test]
fn tabletop_gaze_points_downward() {
    let data = generate_scene(&SceneSpec::tabletop(300, 2)).unwrap();
    let directions: Vec<_> = data.truth.iter().map(|t| t.gaze).collect();
    let hist = yaw_pitch_histogram(&directions, &HistogramBins::default()).unwrap();
    assert_eq!(hist.total(), 300);
    let zero = hist.pitch_edges.iter().position(|e| *e == 0.0).unwrap();
    let below: u64 = hist.counts.iter().map(|row| row[..zero].iter().sum::<u64>()).sum();
    assert_eq!(below, 300);
}

#[test]
fn isotropic_noise_matches_its_expected_angle() {
    // E|N(0, σ)| = σ √(2/π)
    let sigma = 10.0;
    let clean = generate_scene(&SceneSpec::tabletop(1000, 21)).unwrap();
    let noisy = perturb(&clean, &NoiseSpec::gaze(sigma), 77).unwrap();
    let out = evaluate_with_truth(&noisy).unwrap();
    let records = out.records();
    let mean = records.iter().map(|r| r.angular_error_deg).sum::<f64>() / records.len() as f64;
    let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
    assert!((7.0..=9.0).contains(&mean), "{mean}");
    assert!((mean - expected).abs() < 0.4, "{mean} vs {expected}");
}

#[test]
fn constant_bias_shows_up_as_angular_error() {
    let clean = generate_scene(&SceneSpec::tabletop(100, 5)).unwrap();
    let noise = NoiseSpec {
        gaze_bias_deg: YawPitch::new(3.0, 0.0),
        ..Default::default()
    };
    let out = evaluate_with_truth(&perturb(&clean, &noise, 1).unwrap()).unwrap();
    for r in out.records() {
        assert!(r.angular_error_deg > 0.5 && r.angular_error_deg <= 3.0 + 1e-9, "{}", r.angular_error_deg);
    }
}
