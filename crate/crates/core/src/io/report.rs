//! Report bundles: summary rows per method and subset, error CDFs and
//! yaw/pitch histograms, plus their CSV and text renderings.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{float_or_inf, tables::emit_csv, write_atomic, Provenance};
use crate::error::{Error, Result};
use crate::metrics::{error_cdf, summarize, yaw_pitch_histogram, ErrorKind, Histogram2D, HistogramBins, DEFAULT_THRESHOLDS_CM};
use crate::pipeline::{EvalOutput, FrameMeta, MethodSpec, Skipped};

/// Subset label of the row covering every frame.
pub const ALL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Subsets to report besides `all`; every tag present when `None`.
    pub tags: Option<Vec<String>>,
    pub thresholds_cm: Vec<f64>,
    pub bins: HistogramBins,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            tags: None,
            thresholds_cm: DEFAULT_THRESHOLDS_CM.to_vec(),
            bins: HistogramBins::default(),
        }
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub filter: String,
    pub n_frames: usize,
    /// Frames whose gaze ray missed the surface.
    pub n_failures: usize,
    /// Frames with no prediction or no usable head point.
    pub n_skipped: usize,
    /// Frames where the camera-offset correction exceeded its reliable range.
    pub n_large_offset: usize,
    #[serde(with = "float_or_inf")]
    pub mean_angular_deg: f64,
    #[serde(with = "float_or_inf")]
    pub median_distance_cm: f64,
    /// (threshold cm, percent of frames within it)
    pub precision: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCurve {
    pub method: String,
    pub filter: String,
    pub kind: ErrorKind,
    /// (error, fraction), both non-decreasing.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodHistogram {
    pub method: String,
    /// `predicted` or `ground_truth`.
    pub source: String,
    pub histogram: Histogram2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub thresholds_cm: Vec<f64>,
    pub rows: Vec<SummaryRow>,
    pub cdfs: Vec<CdfCurve>,
    pub histograms: Vec<MethodHistogram>,
    pub skipped: Vec<Skipped>,
}

impl ReportBundle {
    /// Rows matching the optional method and subset filters.
    pub fn select(&self, methods: &[String], filter: Option<&str>) -> Vec<&SummaryRow> {
        self.rows
            .iter()
            .filter(|r| methods.is_empty() || methods.contains(&r.method))
            .filter(|r| filter.is_none_or(|f| r.filter == f))
            .collect()
    }

    pub fn cdf(&self, method: &str, filter: &str, kind: ErrorKind) -> Option<&CdfCurve> {
        self.cdfs
            .iter()
            .find(|c| c.method == method && c.filter == filter && c.kind == kind)
    }
}

/// Builds the bundle from pipeline output. Methods and subsets without
/// any evaluated frame produce no row.
pub fn build_report(
    output: &EvalOutput,
    methods: &[MethodSpec],
    frames: &[FrameMeta],
    options: &ReportOptions,
    provenance: Provenance,
) -> Result<ReportBundle> {
    let filters: Vec<String> = {
        let tags: BTreeSet<String> = match &options.tags {
            Some(t) => t.iter().cloned().collect(),
            None => frames.iter().flat_map(|f| f.tags.iter().cloned()).collect(),
        };
        std::iter::once(ALL.to_string()).chain(tags).collect()
    };
    let mut method_ids: Vec<&str> = methods.iter().map(|m| m.id.as_str()).collect();
    method_ids.sort_unstable();

    let frame_has = |frame_id: &str, filter: &str| {
        filter == ALL
            || frames
                .iter()
                .any(|f| f.frame_id == frame_id && f.tags.contains(filter))
    };

    let mut rows = Vec::new();
    let mut cdfs = Vec::new();
    let mut histograms = Vec::new();
    for method in method_ids {
        let results: Vec<_> = output.for_method(method).collect();
        let records: Vec<_> = results.iter().map(|r| r.record.clone()).collect();
        for filter in &filters {
            let tag = (filter != ALL).then_some(filter.as_str());
            let summary = match summarize(&records, tag, &options.thresholds_cm) {
                Ok(s) => s,
                Err(Error::EmptySelection) => continue,
                Err(e) => return Err(e),
            };
            let selected: Vec<_> = records
                .iter()
                .filter(|r| tag.is_none_or(|t| r.has_tag(t)))
                .cloned()
                .collect();
            rows.push(SummaryRow {
                method: method.to_string(),
                filter: filter.clone(),
                n_frames: summary.n_frames,
                n_failures: summary.n_failures,
                n_skipped: output
                    .skipped
                    .iter()
                    .filter(|s| s.method_id == method && frame_has(&s.frame_id, filter))
                    .count(),
                n_large_offset: results
                    .iter()
                    .filter(|r| r.large_offset && tag.is_none_or(|t| r.record.has_tag(t)))
                    .count(),
                mean_angular_deg: summary.mean_angular_deg,
                median_distance_cm: summary.median_distance_cm,
                precision: summary.precision_at,
            });
            for kind in [ErrorKind::Distance, ErrorKind::Angular] {
                cdfs.push(CdfCurve {
                    method: method.to_string(),
                    filter: filter.clone(),
                    kind,
                    points: error_cdf(&selected, kind)?,
                });
            }
        }
        if !results.is_empty() {
            let predicted: Vec<_> = results.iter().map(|r| r.predicted).collect();
            let truth: Vec<_> = results.iter().map(|r| r.ground_truth).collect();
            for (source, dirs) in [("predicted", predicted), ("ground_truth", truth)] {
                histograms.push(MethodHistogram {
                    method: method.to_string(),
                    source: source.into(),
                    histogram: yaw_pitch_histogram(&dirs, &options.bins)?,
                });
            }
        }
    }
    let mut thresholds: Vec<f64> = DEFAULT_THRESHOLDS_CM
        .iter()
        .chain(&options.thresholds_cm)
        .copied()
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    Ok(ReportBundle {
        provenance,
        thresholds_cm: thresholds,
        rows,
        cdfs,
        histograms,
        skipped: output.skipped.clone(),
    })
}

/// Fixed-width table in the column order mean angular error, median
/// distance, precision at each threshold.
pub fn render_table(rows: &[&SummaryRow]) -> String {
    let thresholds: Vec<f64> = rows
        .first()
        .map(|r| r.precision.iter().map(|p| p.0).collect())
        .unwrap_or_default();
    let mut out = String::new();
    let _ = write!(
        out,
        "{:<20} {:<12} {:>6} {:>10} {:>10}",
        "Method", "Subset", "Frames", "Ang (deg)", "Med (cm)"
    );
    for t in &thresholds {
        let _ = write!(out, " {:>9}", format!("P@{t}cm"));
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{:<20} {:<12} {:>6} {:>10.2} {:>10.2}",
            r.method, r.filter, r.n_frames, r.mean_angular_deg, r.median_distance_cm
        );
        for (_, p) in &r.precision {
            let _ = write!(out, " {:>9.2}", p);
        }
        out.push('\n');
    }
    out
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Distance => "distance",
        ErrorKind::Angular => "angular",
    }
}

/// Writes a CDF as `threshold,fraction`, checking that both columns are
/// non-decreasing.
pub fn write_cdf_csv(path: &Path, curve: &CdfCurve, provenance: &Provenance) -> Result<()> {
    assert!(
        curve.points.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1),
        "CDF for {}/{} is not monotone",
        curve.method,
        curve.filter
    );
    let mut meta = provenance.csv_header();
    meta.push(("method".into(), curve.method.clone()));
    meta.push(("filter".into(), curve.filter.clone()));
    meta.push((
        "threshold_unit".into(),
        match curve.kind {
            ErrorKind::Distance => "cm",
            ErrorKind::Angular => "deg",
        }
        .into(),
    ));
    let rows = curve
        .points
        .iter()
        .map(|(t, f)| vec![t.to_string(), f.to_string()]);
    write_atomic(path, &emit_csv(&meta, &["threshold", "fraction"], rows))
}

/// Writes `summary.csv`, `skipped.csv`, `cdf/*.csv` and `histogram/*.csv`
/// under `dir`.
pub fn write_report_csvs(dir: &Path, bundle: &ReportBundle) -> Result<()> {
    let prov = &bundle.provenance;
    let mut header = vec![
        "method",
        "filter",
        "n_frames",
        "n_failures",
        "n_skipped",
        "n_large_offset",
        "mean_angular_deg",
        "median_distance_cm",
    ];
    let p_cols: Vec<String> = bundle.thresholds_cm.iter().map(|t| format!("p_at_{t}cm")).collect();
    header.extend(p_cols.iter().map(String::as_str));
    let rows = bundle.rows.iter().map(|r| {
        let mut row = vec![
            r.method.clone(),
            r.filter.clone(),
            r.n_frames.to_string(),
            r.n_failures.to_string(),
            r.n_skipped.to_string(),
            r.n_large_offset.to_string(),
            r.mean_angular_deg.to_string(),
            r.median_distance_cm.to_string(),
        ];
        row.extend(r.precision.iter().map(|p| p.1.to_string()));
        row
    });
    write_atomic(&dir.join("summary.csv"), &emit_csv(&prov.csv_header(), &header, rows))?;

    let rows = bundle
        .skipped
        .iter()
        .map(|s| vec![s.frame_id.clone(), s.method_id.clone(), s.reason.clone()]);
    write_atomic(
        &dir.join("skipped.csv"),
        &emit_csv(&prov.csv_header(), &["frame_id", "method", "reason"], rows),
    )?;

    for c in &bundle.cdfs {
        let name = format!("{}.csv", file_stem(&[&c.method, &c.filter, kind_name(c.kind)]));
        write_cdf_csv(&dir.join("cdf").join(name), c, prov)?;
    }
    for h in &bundle.histograms {
        let hist = &h.histogram;
        let mut rows = Vec::new();
        for (a, row) in hist.counts.iter().enumerate() {
            for (b, &n) in row.iter().enumerate() {
                if n > 0 {
                    rows.push(vec![
                        hist.yaw_edges[a].to_string(),
                        hist.yaw_edges[a + 1].to_string(),
                        hist.pitch_edges[b].to_string(),
                        hist.pitch_edges[b + 1].to_string(),
                        n.to_string(),
                    ]);
                }
            }
        }
        let name = format!("{}.csv", file_stem(&[&h.method, &h.source]));
        write_atomic(
            &dir.join("histogram").join(name),
            &emit_csv(
                &prov.csv_header(),
                &["yaw_lo_deg", "yaw_hi_deg", "pitch_lo_deg", "pitch_hi_deg", "count"],
                rows,
            ),
        )?;
    }
    Ok(())
}
