//! Turns a camera-offset yaw/pitch prediction into a point on the work
//! surface and scores it against the target square.

use gazeplane::gaze::{camera_offset_angles, correct_gaze_to_camera_frame, gaze_point_on_surface, ground_truth_direction};
use gazeplane::geom::{angular_error, Vec3, YawPitch};
use gazeplane::plane_pose::{target_center, GridConfig};
use gazeplane::reconstruction::{HeadPoint, HeadSource};
use gazeplane::synthetic::SceneSpec;
use gazeplane::{GazeConvention, GazePrediction};

fn main() -> gazeplane::Result<()> {
    // The tabletop scene's camera: 42 cm above the table, tilted 30 degrees down.
    let plane = SceneSpec::tabletop(0, 0).plane;
    let camera_from_plane = plane.transform.inverse();
    let grid = GridConfig::default_display();

    let head = HeadPoint {
        position: camera_from_plane.transform_point(&Vec3::new(0.57, 0.3, 0.35)),
        ray_gap: 0.0,
        source: HeadSource::EyeMidpoint,
    };
    let target = target_center(&grid, 8)?;
    let truth = ground_truth_direction(&head, &plane, &target)?;

    // What a perfect camera-offset network would output for this frame.
    let exact = camera_offset_angles(&truth, &head).to_degrees();
    for (yaw, pitch) in [(0.0, 0.0), (5.0, -30.0), (12.0, -38.0), exact] {
        let pred = GazePrediction {
            frame_id: "demo".into(),
            method_id: "net".into(),
            angles: YawPitch::from_degrees(yaw, pitch),
            convention: GazeConvention::CameraOffset,
        };
        let corrected = correct_gaze_to_camera_frame(&pred, &head);
        let hit = gaze_point_on_surface(&head, &corrected.direction, &plane);
        let (oy, op) = corrected.head_offset.to_degrees();
        print!(
            "pred ({yaw:>5.1}, {pitch:>6.1}) offset ({oy:.1}, {op:.1}) error {:.2} deg: ",
            angular_error(&corrected.direction, &truth)
        );
        if hit.is_ok() {
            let d = hit.point - target;
            println!("hits ({:.3}, {:.3}), {:.1} cm from target 8", hit.point.x, hit.point.y, d.xy().norm() * 100.0);
        } else {
            println!("misses the surface ({:?})", hit.status);
        }
    }
    Ok(())
}
