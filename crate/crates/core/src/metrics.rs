//! Evaluation metrics: angular error, surface distance, Precision@X cm,
//! error CDFs and yaw/pitch distributions.
//!
//! Failed intersections carry an infinite distance. They count in every
//! denominator and are never within any threshold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{angular_error, dir_to_yaw_pitch_continuous, UnitVec3, Vec3, YawPitch};
use crate::gaze::{SurfaceGazeEstimate, SurfaceStatus};

/// Precision thresholds always reported, in centimeters.
pub const DEFAULT_THRESHOLDS_CM: [f64; 3] = [10.0, 20.0, 50.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub frame_id: String,
    pub method_id: String,
    pub target_id: u32,
    pub angular_error_deg: f64,
    /// Meters; `+∞` when the gaze ray missed the surface.
    pub surface_distance_m: f64,
    pub tags: BTreeSet<String>,
}

impl EvalRecord {
    pub fn distance_cm(&self) -> f64 {
        self.surface_distance_m * 100.0
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains(tag)
    }
}

/// Scores one frame. `target` is the target-square center on the surface.
pub fn evaluate_frame(
    pred: &UnitVec3,
    gt: &UnitVec3,
    estimate: &SurfaceGazeEstimate,
    target: &Vec3,
) -> (f64, f64) {
    let angular = angular_error(pred, gt);
    let distance = match estimate.status {
        SurfaceStatus::Ok => {
            let d = estimate.point - target;
            d.x.hypot(d.y)
        }
        _ => f64::INFINITY,
    };
    (angular, distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_frames: usize,
    /// Frames whose gaze ray missed the surface.
    pub n_failures: usize,
    pub mean_angular_deg: f64,
    /// `+∞` when the median falls on a failure.
    pub median_distance_cm: f64,
    /// threshold (cm, as text) → percentage of frames within it.
    pub precision_at: Vec<(f64, f64)>,
}

impl MetricsSummary {
    pub fn precision(&self, threshold_cm: f64) -> Option<f64> {
        self.precision_at
            .iter()
            .find(|(t, _)| *t == threshold_cm)
            .map(|(_, p)| *p)
    }
}

/// Median with `+∞` ordered above every finite value; even counts average
/// the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn within(distance_cm: f64, threshold_cm: f64) -> bool {
    distance_cm <= threshold_cm
}

/// Records in canonical (frame_id, method_id) order.
pub fn canonical_order(records: &[EvalRecord]) -> Vec<&EvalRecord> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.frame_id, &a.method_id).cmp(&(&b.frame_id, &b.method_id)));
    sorted
}

/// Aggregates records, optionally restricted to one tag. The default
/// thresholds are always included alongside `extra_thresholds_cm`.
pub fn summarize(
    records: &[EvalRecord],
    tag_filter: Option<&str>,
    extra_thresholds_cm: &[f64],
) -> Result<MetricsSummary> {
    let selected: Vec<&EvalRecord> = canonical_order(records)
        .into_iter()
        .filter(|r| tag_filter.is_none_or(|t| r.has_tag(t)))
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let n = selected.len();
    let mean = selected.iter().map(|r| r.angular_error_deg).sum::<f64>() / n as f64;
    let distances: Vec<f64> = selected.iter().map(|r| r.distance_cm()).collect();
    let med = median(&distances).expect("non-empty");

    let mut thresholds: Vec<f64> = DEFAULT_THRESHOLDS_CM
        .iter()
        .chain(extra_thresholds_cm)
        .copied()
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let precision_at = thresholds
        .into_iter()
        .map(|t| {
            let hits = distances.iter().filter(|d| within(**d, t)).count();
            (t, 100.0 * hits as f64 / n as f64)
        })
        .collect();
    Ok(MetricsSummary {
        n_frames: n,
        n_failures: distances.iter().filter(|d| !d.is_finite()).count(),
        mean_angular_deg: mean,
        median_distance_cm: med,
        precision_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Degrees.
    Angular,
    /// Centimeters.
    Distance,
}

/// Empirical CDF as (error, fraction of all records with error ≤ it).
/// Infinite errors are never covered, so the curve tops out below 1 when
/// failures exist.
pub fn error_cdf(records: &[EvalRecord], which: ErrorKind) -> Result<Vec<(f64, f64)>> {
    if records.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut values: Vec<f64> = records
        .iter()
        .map(|r| match which {
            ErrorKind::Angular => r.angular_error_deg,
            ErrorKind::Distance => r.distance_cm(),
        })
        .filter(|v| v.is_finite())
        .collect();
    values.sort_by(f64::total_cmp);
    let n = records.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(values.len());
    for (k, v) in values.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Evaluates a CDF step function at `x`.
pub fn cdf_at(cdf: &[(f64, f64)], x: f64) -> f64 {
    cdf.iter()
        .take_while(|(v, _)| within(*v, x))
        .last()
        .map_or(0.0, |(_, f)| *f)
}

/// Bin edges for a yaw/pitch histogram, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub yaw_edges: Vec<f64>,
    pub pitch_edges: Vec<f64>,
}

impl HistogramBins {
    pub fn uniform(yaw: (f64, f64), pitch: (f64, f64), width: f64) -> Result<Self> {
        let edges = |(lo, hi): (f64, f64), name: &str| -> Result<Vec<f64>> {
            if !(width > 0.0) || !(hi > lo) {
                return Err(Error::field(name, "bin range must be increasing with positive width"));
            }
            let n = ((hi - lo) / width).round() as usize;
            Ok((0..=n).map(|k| lo + k as f64 * width).collect())
        };
        Ok(Self {
            yaw_edges: edges(yaw, "yaw bins")?,
            pitch_edges: edges(pitch, "pitch bins")?,
        })
    }
}

impl Default for HistogramBins {
    /// 2° bins over yaw ∈ [-90°, 90°] and pitch ∈ [-120°, 30°].
    fn default() -> Self {
        Self::uniform((-90.0, 90.0), (-120.0, 30.0), 2.0).expect("valid default bins")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub yaw_edges: Vec<f64>,
    pub pitch_edges: Vec<f64>,
    /// `counts[yaw_bin][pitch_bin]`
    pub counts: Vec<Vec<u64>>,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Bin index with half-open bins; out-of-range values land in the edge bins.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let nbins = edges.len() - 1;
    let k = edges.partition_point(|e| *e <= v);
    k.saturating_sub(1).min(nbins - 1)
}

/// Yaw/pitch distribution of camera-frame directions. Pitch continues
/// past -90° for steep downward gaze instead of flipping yaw.
pub fn yaw_pitch_histogram(directions: &[UnitVec3], bins: &HistogramBins) -> Result<Histogram2D> {
    let angles: Vec<YawPitch> = directions.iter().map(dir_to_yaw_pitch_continuous).collect();
    yaw_pitch_histogram_angles(&angles, bins)
}

pub fn yaw_pitch_histogram_angles(angles: &[YawPitch], bins: &HistogramBins) -> Result<Histogram2D> {
    if angles.is_empty() {
        return Err(Error::EmptySelection);
    }
    if bins.yaw_edges.len() < 2 || bins.pitch_edges.len() < 2 {
        return Err(Error::field("bins", "need at least two edges per axis"));
    }
    let mut counts = vec![vec![0u64; bins.pitch_edges.len() - 1]; bins.yaw_edges.len() - 1];
    for a in angles {
        let (yaw, pitch) = a.to_degrees();
        counts[bin_of(&bins.yaw_edges, yaw)][bin_of(&bins.pitch_edges, pitch)] += 1;
    }
    Ok(Histogram2D {
        yaw_edges: bins.yaw_edges.clone(),
        pitch_edges: bins.pitch_edges.clone(),
        counts,
    })
}

/// Per-tag summaries keyed by filter label ("all" for no filter).
pub fn summarize_by_tag(
    records: &[EvalRecord],
    tags: &[String],
    extra_thresholds_cm: &[f64],
) -> BTreeMap<String, Result<MetricsSummary>> {
    let mut out = BTreeMap::new();
    out.insert("all".to_string(), summarize(records, None, extra_thresholds_cm));
    for t in tags {
        out.insert(t.clone(), summarize(records, Some(t), extra_thresholds_cm));
    }
    out
}
