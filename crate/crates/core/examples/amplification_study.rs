//! How isotropic angular noise in predicted gaze turns into distance error
//! on the work surface of the default tabletop scene.

use gazeplane::synthetic::{amplification_study, SceneSpec};

fn main() -> gazeplane::Result<()> {
    let spec = SceneSpec::tabletop(2000, 7);
    let sigmas = [0.0, 2.5, 5.0, 10.0, 15.0, 20.0];
    let rows = amplification_study(&spec, &sigmas, 99)?;
    println!("{:>8} {:>12} {:>14} {:>8} {:>8} {:>8}", "sigma", "mean ang", "median cm", "P@10", "P@20", "P@50");
    for r in rows {
        let s = &r.summary;
        println!(
            "{:>8.1} {:>12.3} {:>14.3} {:>8.2} {:>8.2} {:>8.2}",
            r.sigma_deg,
            s.mean_angular_deg,
            s.median_distance_cm,
            s.precision(10.0).unwrap_or(f64::NAN),
            s.precision(20.0).unwrap_or(f64::NAN),
            s.precision(50.0).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
