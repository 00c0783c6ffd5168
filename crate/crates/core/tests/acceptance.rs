//! Acceptance checks, one line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gazeplane::calibration::{calibrate_rig, CalibrationOptions};
use gazeplane::gaze::correct_gaze_to_camera_frame;
use gazeplane::io::{
    build_report, to_json_bytes, write_corners, write_faces, write_records, write_report_csvs, CornerTable,
    Provenance, ReportOptions,
};
use gazeplane::metrics::{cdf_at, error_cdf, summarize, ErrorKind};
use gazeplane::plane_pose::estimate_plane_pose;
use gazeplane::synthetic::{evaluate_with_truth, generate_scene, perturb, NoiseSpec, SceneSpec, SyntheticDataset};
use gazeplane::{
    evaluate, EvalInputs, EvalRecord, Frame, GazeConvention, GazePrediction, GazeRay, HeadPoint, HeadSource, Vec3,
    YawPitch,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn calibrate_and_evaluate(data: &SyntheticDataset) -> gazeplane::EvalOutput {
    let spec = &data.spec;
    let cal = calibrate_rig(
        &data.calibration_corners,
        &spec.board,
        spec.rig.left.image_size,
        &CalibrationOptions::default(),
    )
    .expect("calibration");
    let plane = estimate_plane_pose(&data.plane_corners, &spec.grid, &cal.rig.left).expect("plane pose");
    let frames = data.frames();
    evaluate(&EvalInputs::new(
        &cal.rig,
        &plane,
        &spec.grid,
        &frames,
        &data.faces,
        &data.predictions,
        &spec.methods,
    ))
    .expect("evaluation")
}

fn zero_noise_identity() -> Outcome {
    let data = generate_scene(&SceneSpec::tabletop(200, 42)).map_err(|e| e.to_string())?;
    let out = calibrate_and_evaluate(&data);
    let s = summarize(&out.records(), None, &[]).map_err(|e| e.to_string())?;
    check(
        out.results.len() == 400 && s.median_distance_cm < 1e-4 && s.mean_angular_deg < 1e-5,
        format!(
            "{} records, median {:.2e} cm, mean {:.2e} deg",
            out.results.len(),
            s.median_distance_cm,
            s.mean_angular_deg
        ),
    )
}

fn calibration_recovery() -> Outcome {
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    let mut rms = Vec::new();
    let mut baseline = Vec::new();
    for seed in 0..10 {
        let spec = SceneSpec::tabletop(0, 100 + seed);
        let noise = NoiseSpec {
            corner_px_sigma: 0.2,
            ..Default::default()
        };
        let data = perturb(&generate_scene(&spec).map_err(|e| e.to_string())?, &noise, seed).map_err(|e| e.to_string())?;
        let cal = calibrate_rig(
            &data.calibration_corners,
            &spec.board,
            spec.rig.left.image_size,
            &CalibrationOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        assert_eq!(spec.calibration_views, 15);
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        fx.push(rel(cal.rig.left.fx, spec.rig.left.fx).max(rel(cal.rig.right.fx, spec.rig.right.fx)));
        fy.push(rel(cal.rig.left.fy, spec.rig.left.fy).max(rel(cal.rig.right.fy, spec.rig.right.fy)));
        rms.push(cal.left.rms_reprojection.max(cal.right.rms_reprojection));
        baseline.push(rel(cal.rig.baseline(), spec.rig.baseline()));
    }
    let (fx, fy, rms, baseline) = (median(fx), median(fy), median(rms), median(baseline));
    check(
        fx < 0.01 && fy < 0.01 && (0.15..=0.25).contains(&rms) && baseline < 0.01,
        format!(
            "median over 10 seeds: fx off {:.3}%, fy off {:.3}%, rms {rms:.3} px, baseline off {:.3}%",
            100.0 * fx,
            100.0 * fy,
            100.0 * baseline
        ),
    )
}

fn record(i: usize, distance_cm: f64) -> EvalRecord {
    EvalRecord {
        frame_id: format!("f{i:05}"),
        method_id: "m".into(),
        target_id: 1,
        angular_error_deg: 0.0,
        surface_distance_m: distance_cm / 100.0,
        tags: Default::default(),
    }
}

fn metric_oracles() -> Outcome {
    let fixture: Vec<_> = [5.0, 15.0, 25.0, 60.0].iter().enumerate().map(|(i, d)| record(i, *d)).collect();
    let s = summarize(&fixture, None, &[]).map_err(|e| e.to_string())?;
    let fixture_ok = (s.median_distance_cm - 20.0).abs() < 1e-9
        && s.precision(10.0) == Some(25.0)
        && s.precision(20.0) == Some(50.0)
        && s.precision(50.0) == Some(75.0);
    if !fixture_ok {
        return Err(format!("fixture gave {s:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let thresholds = [1.0, 7.5, 10.0, 20.0, 33.0, 50.0];
    for set in 0..1000 {
        let n = rng.random_range(1..60);
        let records: Vec<_> = (0..n)
            .map(|i| {
                let d = if rng.random_bool(0.1) {
                    f64::INFINITY
                } else if rng.random_bool(0.2) {
                    // exact threshold hits exercise the boundary
                    thresholds[rng.random_range(0..thresholds.len())]
                } else {
                    rng.random_range(0.0..80.0)
                };
                record(i, d)
            })
            .collect();
        let s = summarize(&records, None, &thresholds).map_err(|e| e.to_string())?;
        let cdf = error_cdf(&records, ErrorKind::Distance).map_err(|e| e.to_string())?;
        if !cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1) {
            return Err(format!("set {set}: CDF not monotone"));
        }
        for (t, p) in &s.precision_at {
            let from_cdf = 100.0 * cdf_at(&cdf, *t);
            if (from_cdf - p).abs() > 1e-9 {
                return Err(format!("set {set}: P@{t} = {p} but CDF gives {from_cdf}"));
            }
        }
    }
    Ok("fixture median 20 cm, P@10/20/50 = 25/50/75%; 1000 random sets consistent".into())
}

fn correction_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pred = GazePrediction {
        frame_id: "f".into(),
        method_id: "m".into(),
        angles: YawPitch::default(),
        convention: GazeConvention::CameraOffset,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let head = HeadPoint {
            position: Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.4..0.4),
                rng.random_range(0.2..2.0),
            ),
            ray_gap: 0.0,
            source: HeadSource::EyeMidpoint,
        };
        let d = correct_gaze_to_camera_frame(&pred, &head).direction;
        let ray = GazeRay::new(head.position, d, Frame::Camera);
        worst = worst.max(ray.line_distance(&Vec3::zeros()));
    }
    check(worst < 1e-9, format!("largest miss over 100 heads {worst:.1e} m"))
}

/// Mean angular error expected from 10° isotropic noise.
const EXPECTED_MEAN_DEG: f64 = 7.98;

fn noise_consistency() -> Outcome {
    let clean = generate_scene(&SceneSpec::tabletop(5000, 42)).map_err(|e| e.to_string())?;
    let noisy = perturb(&clean, &NoiseSpec::gaze(10.0), 42).map_err(|e| e.to_string())?;
    let out = evaluate_with_truth(&noisy).map_err(|e| e.to_string())?;
    let s = summarize(&out.records(), None, &[]).map_err(|e| e.to_string())?;
    let rel = (s.mean_angular_deg / EXPECTED_MEAN_DEG - 1.0).abs();
    check(
        rel <= 0.10 && (8.0..=30.0).contains(&s.median_distance_cm),
        format!(
            "5000 frames: mean {:.2} deg ({:+.1}% of {EXPECTED_MEAN_DEG}), median {:.2} cm",
            s.mean_angular_deg,
            100.0 * (s.mean_angular_deg / EXPECTED_MEAN_DEG - 1.0),
            s.median_distance_cm
        ),
    )
}

/// Generates, perturbs, calibrates, evaluates and writes everything to `dir`.
fn write_run(dir: &Path) {
    let spec = SceneSpec::tabletop(150, 5);
    let noise = NoiseSpec {
        corner_px_sigma: 0.2,
        face_px_sigma: 0.5,
        gaze_angle_sigma_deg: 8.0,
        ..Default::default()
    };
    let data = perturb(&generate_scene(&spec).unwrap(), &noise, 6).unwrap();
    let prov = Provenance::default();
    let corners = CornerTable {
        image_size: Some(spec.rig.left.image_size),
        corners: data.calibration_corners.clone(),
    };
    write_corners(&dir.join("corners.csv"), &corners, &prov).unwrap();
    write_faces(&dir.join("faces.csv"), &data.faces, &prov).unwrap();
    let out = calibrate_and_evaluate(&data);
    write_records(&dir.join("records.csv"), &out.records(), &prov).unwrap();
    let bundle = build_report(&out, &spec.methods, &data.frames(), &ReportOptions::default(), prov).unwrap();
    fs::write(dir.join("report.json"), to_json_bytes(&bundle)).unwrap();
    write_report_csvs(dir, &bundle).unwrap();
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for threads in [1, 4] {
        let dir = tmp.path().join(format!("t{threads}"));
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| write_run(&dir));
        trees.push(tree(&dir));
    }
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    check(
        trees[0] == trees[1],
        format!("{} files, {bytes} bytes identical across 1 and 4 threads", trees[0].len()),
    )
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("zero-noise identity", zero_noise_identity, Some(Duration::from_secs(60))),
        ("calibration recovery", calibration_recovery, Some(Duration::from_secs(30))),
        ("metric oracles", metric_oracles, None),
        ("correction exactness", correction_exactness, None),
        ("noise consistency", noise_consistency, Some(Duration::from_secs(120))),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (n, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, budget) {
            (Ok(d), Some(b)) if elapsed > *b => Err(format!("{d}; took longer than {} s", b.as_secs())),
            (r, _) => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {status} {name}: {detail} ({:.2} s)", n + 1, elapsed.as_secs_f64());
    }
    println!(
        "criterion 7 DEFERRED reproduction on recorded data: the dataset and per-frame predictions are not available"
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
