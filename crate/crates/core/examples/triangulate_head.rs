//! Triangulates a head from its face boxes in both cameras and reports the
//! ray gap as a consistency check.

use gazeplane::reconstruction::{head_point, FaceObservation, HeadSource};
use gazeplane::synthetic::{generate_scene, SceneSpec};
use gazeplane::CameraId;

fn main() -> gazeplane::Result<()> {
    let spec = SceneSpec::tabletop(5, 11);
    let data = generate_scene(&spec)?;
    for truth in &data.truth {
        let face = |camera| -> Option<&FaceObservation> {
            data.faces
                .iter()
                .find(|f| f.frame_id == truth.meta.frame_id && f.camera == camera)
        };
        let mut left = face(CameraId::Left).cloned();
        // A box shifted 2 px off the epipolar line shows up as a ray gap.
        if let Some(b) = left.as_mut().and_then(|f| f.bbox.as_mut()) {
            b[1] += 2.0;
            b[3] += 2.0;
        }
        let head = head_point(left.as_ref(), face(CameraId::Right), &spec.rig, HeadSource::BboxCenter)?;
        println!(
            "{}: head ({:.3}, {:.3}, {:.3}) m, error {:.1} mm, ray gap {:.2} mm",
            truth.meta.frame_id,
            head.position.x,
            head.position.y,
            head.position.z,
            (head.position - truth.head).norm() * 1e3,
            head.ray_gap * 1e3
        );
    }
    Ok(())
}
