//! Summary metrics, error CDF and a subset split from hand-made records.

use gazeplane::metrics::{cdf_at, error_cdf, summarize, summarize_by_tag, ErrorKind};
use gazeplane::EvalRecord;

fn main() -> gazeplane::Result<()> {
    let rows = [
        (4.0, 5.0, "glasses"),
        (9.0, 15.0, "glasses"),
        (11.0, 25.0, "no_glasses"),
        (20.0, 60.0, "no_glasses"),
        (35.0, f64::INFINITY, "no_glasses"),
    ];
    let records: Vec<EvalRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, &(ang, cm, tag))| EvalRecord {
            frame_id: format!("f{i}"),
            method_id: "demo".into(),
            target_id: 1,
            angular_error_deg: ang,
            surface_distance_m: cm / 100.0,
            tags: [tag.to_string()].into_iter().collect(),
        })
        .collect();

    let s = summarize(&records, None, &[30.0])?;
    println!(
        "{} frames ({} missed the surface): mean {:.2} deg, median {:.1} cm",
        s.n_frames, s.n_failures, s.mean_angular_deg, s.median_distance_cm
    );
    for (t, p) in &s.precision_at {
        println!("  P@{t}cm = {p:.1}%");
    }

    let cdf = error_cdf(&records, ErrorKind::Distance)?;
    println!("distance CDF {cdf:?}, at 20 cm: {:.2}", cdf_at(&cdf, 20.0));

    for (tag, summary) in summarize_by_tag(&records, &["glasses".into(), "no_glasses".into()], &[]) {
        let s = summary?;
        println!("{tag:>10}: {} frames, median {:.1} cm", s.n_frames, s.median_distance_cm);
    }
    Ok(())
}
