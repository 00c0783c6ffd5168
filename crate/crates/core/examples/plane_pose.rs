//! Locates the work surface from the display grid corners seen by the
//! left camera, then maps a camera-frame point onto the surface.

use gazeplane::plane_pose::{estimate_plane_pose, target_center};
use gazeplane::synthetic::{generate_scene, perturb, NoiseSpec, SceneSpec};

fn main() -> gazeplane::Result<()> {
    let spec = SceneSpec::tabletop(0, 5);
    let clean = generate_scene(&spec)?;
    let noisy = perturb(
        &clean,
        &NoiseSpec {
            corner_px_sigma: 0.2,
            ..Default::default()
        },
        1,
    )?;

    let pose = estimate_plane_pose(&noisy.plane_corners, &spec.grid, &spec.rig.left)?;
    let truth = spec.camera_from_plane();
    let est = pose.transform.inverse();
    println!(
        "{} corners, rms {:.3} px, translation error {:.2} mm",
        noisy.plane_corners.len(),
        pose.rms_reprojection,
        (est.translation - truth.translation).norm() * 1e3
    );

    let target = target_center(&spec.grid, 7)?;
    let in_camera = truth.transform_point(&target);
    let back = pose.transform.transform_point(&in_camera);
    println!(
        "target 7 at ({:.3}, {:.3}) m, recovered ({:.4}, {:.4}, {:.1e})",
        target.x, target.y, back.x, back.y, back.z
    );
    Ok(())
}
