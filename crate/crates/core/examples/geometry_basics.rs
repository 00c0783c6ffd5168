//! Yaw/pitch conventions, projection with lens distortion and ray-plane
//! intersection.

use gazeplane::geom::{
    dir_to_yaw_pitch, intersect_ray_plane_z0, undistort_pixel, yaw_pitch_to_dir, CameraIntrinsics, Distortion,
    Frame, GazeRay, Vec3, YawPitch,
};
use nalgebra::Unit;

fn main() -> gazeplane::Result<()> {
    // (0, 0) looks straight back at the camera: -Z in the camera frame.
    for (yaw, pitch) in [(0.0, 0.0), (30.0, 0.0), (0.0, -20.0), (45.0, 10.0)] {
        let d = yaw_pitch_to_dir(YawPitch::from_degrees(yaw, pitch));
        let back = dir_to_yaw_pitch(&d).to_degrees();
        println!(
            "yaw {yaw:>5.1} pitch {pitch:>6.1} -> ({:+.3}, {:+.3}, {:+.3}) -> ({:.1}, {:.1})",
            d.x, d.y, d.z, back.0, back.1
        );
    }

    let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0, (1280, 720)).with_distortion(Distortion {
        k1: -0.2,
        ..Default::default()
    });
    let x = Vec3::new(0.1, 0.05, 1.0);
    let px = k.project(&x)?;
    let n = undistort_pixel(&k, px)?;
    println!("point {x:?} projects to ({:.3}, {:.3}), undistorts to ({:.6}, {:.6})", px.x, px.y, n.x, n.y);

    // A ray from 40 cm above the surface, looking 45 degrees down.
    let ray = GazeRay::new(
        Vec3::new(0.0, 0.0, 0.4),
        Unit::new_normalize(Vec3::new(1.0, 0.0, -1.0)),
        Frame::Plane,
    );
    let (hit, alpha) = intersect_ray_plane_z0(&ray)?;
    println!("ray hits the surface at ({:.3}, {:.3}) after {alpha:.3} m", hit.x, hit.y);
    Ok(())
}
