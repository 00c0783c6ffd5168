//! Calibrates a synthetic stereo rig from 15 checkerboard views with
//! 0.2 px corner noise and compares against the true parameters.

use std::time::Instant;

use gazeplane::calibration::{calibrate_rig, CalibrationOptions};
use gazeplane::synthetic::{generate_scene, perturb, NoiseSpec, SceneSpec};

fn main() -> gazeplane::Result<()> {
    let spec = SceneSpec::tabletop(0, 3);
    let clean = generate_scene(&spec)?;
    let noise = NoiseSpec {
        corner_px_sigma: 0.2,
        ..Default::default()
    };
    let noisy = perturb(&clean, &noise, 11)?;

    let start = Instant::now();
    let cal = calibrate_rig(
        &noisy.calibration_corners,
        &spec.board,
        spec.rig.left.image_size,
        &CalibrationOptions::default(),
    )?;
    println!("calibrated in {:.2?}", start.elapsed());

    for (name, got, truth) in [
        ("left", &cal.left, &spec.rig.left),
        ("right", &cal.right, &spec.rig.right),
    ] {
        let k = &got.intrinsics;
        println!(
            "{name:>5}: fx {:.2} (true {:.2})  fy {:.2} (true {:.2})  cx {:.2}  cy {:.2}  k1 {:.4}  rms {:.3} px",
            k.fx, truth.fx, k.fy, truth.fy, k.cx, k.cy, k.dist.k1, got.rms_reprojection
        );
    }
    println!(
        "baseline {:.2} mm (true {:.2} mm)",
        cal.rig.baseline() * 1e3,
        spec.rig.baseline() * 1e3
    );
    Ok(())
}
