//! CSV tables: corners, face observations, predictions and per-frame
//! evaluation records.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{read_text, write_atomic, Provenance};
use crate::calibration::CornerObservation;
use crate::error::{Error, Result};
use crate::gaze::{GazeConvention, GazePrediction};
use crate::geom::YawPitch;
use crate::metrics::EvalRecord;
use crate::reconstruction::FaceObservation;

struct RawTable {
    path: PathBuf,
    meta: BTreeMap<String, String>,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.into(),
        line,
        message: message.into(),
    }
}

fn read_table(path: &Path, required: &[&str]) -> Result<RawTable> {
    let text = read_text(path)?;
    let mut meta = BTreeMap::new();
    let mut offset = 0u64;
    let mut rest = text.as_str();
    while rest.starts_with('#') {
        let (line, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        offset += 1;
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        rest = tail;
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, offset + 1, e.to_string()))?
        .clone();
    let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    for c in required {
        if !columns.contains_key(*c) {
            return Err(parse_error(
                path,
                offset + 1,
                format!("missing column `{c}` (expected {})", required.join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, offset + line, e.to_string())
        })?;
        let line = offset + rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(RawTable {
        path: path.into(),
        meta,
        columns,
        rows,
    })
}

impl RawTable {
    fn text<'r>(&self, rec: &'r csv::StringRecord, column: &str) -> &'r str {
        rec.get(self.columns[column]).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.text(rec, column);
        raw.parse()
            .map_err(|e| parse_error(&self.path, line, format!("column `{column}`: cannot parse `{raw}`: {e}")))
    }

    fn optional<T: FromStr>(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if !self.columns.contains_key(column) || self.text(rec, column).is_empty() {
            return Ok(None);
        }
        self.parse(line, rec, column).map(Some)
    }

    fn finite(&self, line: u64, rec: &csv::StringRecord, column: &str) -> Result<f64> {
        let v: f64 = self.parse(line, rec, column)?;
        if !v.is_finite() {
            return Err(parse_error(&self.path, line, format!("column `{column}` must be finite")));
        }
        Ok(v)
    }
}

pub(crate) fn emit_csv(meta: &[(String, String)], header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, v) in meta {
        out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Checkerboard or display corners: `view_id,camera,i,j,u,v`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CornerTable {
    /// From the optional `# image_size=WxH` header.
    pub image_size: Option<(u32, u32)>,
    pub corners: Vec<CornerObservation>,
}

const CORNER_COLUMNS: [&str; 6] = ["view_id", "camera", "i", "j", "u", "v"];

fn parse_image_size(s: &str) -> Option<(u32, u32)> {
    let (w, h) = s.split_once(['x', 'X'])?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

pub fn read_corners(path: &Path) -> Result<CornerTable> {
    let t = read_table(path, &CORNER_COLUMNS)?;
    let image_size = match t.meta.get("image_size") {
        None => None,
        Some(s) => Some(
            parse_image_size(s)
                .ok_or_else(|| parse_error(path, 1, format!("image_size `{s}` is not WIDTHxHEIGHT")))?,
        ),
    };
    let mut corners = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        corners.push(CornerObservation {
            view_id: t.text(rec, "view_id").to_string(),
            camera: t.parse(*line, rec, "camera")?,
            grid_index: (t.parse(*line, rec, "i")?, t.parse(*line, rec, "j")?),
            pixel: Vector2::new(t.finite(*line, rec, "u")?, t.finite(*line, rec, "v")?),
        });
    }
    Ok(CornerTable { image_size, corners })
}

pub fn write_corners(path: &Path, table: &CornerTable, provenance: &Provenance) -> Result<()> {
    let mut meta = provenance.csv_header();
    if let Some((w, h)) = table.image_size {
        meta.push(("image_size".into(), format!("{w}x{h}")));
    }
    let rows = table.corners.iter().map(|c| {
        vec![
            c.view_id.clone(),
            c.camera.to_string(),
            c.grid_index.0.to_string(),
            c.grid_index.1.to_string(),
            c.pixel.x.to_string(),
            c.pixel.y.to_string(),
        ]
    });
    write_atomic(path, &emit_csv(&meta, &CORNER_COLUMNS, rows))
}

const FACE_COLUMNS: [&str; 8] = ["frame_id", "camera", "u_min", "v_min", "u_max", "v_max", "eye_u", "eye_v"];

/// Face observations; bbox and eye columns may be left empty.
pub fn read_faces(path: &Path) -> Result<Vec<FaceObservation>> {
    let t = read_table(path, &FACE_COLUMNS[..2])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let b: Vec<Option<f64>> = FACE_COLUMNS[2..6]
            .iter()
            .map(|c| t.optional(*line, rec, c))
            .collect::<Result<_>>()?;
        let bbox = match b.as_slice() {
            [Some(a), Some(b), Some(c), Some(d)] => Some([*a, *b, *c, *d]),
            [None, None, None, None] => None,
            _ => return Err(parse_error(path, *line, "bbox needs all four of u_min,v_min,u_max,v_max")),
        };
        let eye = match (t.optional::<f64>(*line, rec, "eye_u")?, t.optional::<f64>(*line, rec, "eye_v")?) {
            (Some(u), Some(v)) => Some(Vector2::new(u, v)),
            (None, None) => None,
            _ => return Err(parse_error(path, *line, "eye midpoint needs both eye_u and eye_v")),
        };
        let face = FaceObservation {
            frame_id: t.text(rec, "frame_id").to_string(),
            camera: t.parse(*line, rec, "camera")?,
            bbox,
            eye_midpoint: eye,
        };
        face.validate().map_err(|e| parse_error(path, *line, e.to_string()))?;
        out.push(face);
    }
    Ok(out)
}

pub fn write_faces(path: &Path, faces: &[FaceObservation], provenance: &Provenance) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let rows = faces.iter().map(|f| {
        let b = f.bbox.map(|b| b.map(Some)).unwrap_or([None; 4]);
        vec![
            f.frame_id.clone(),
            f.camera.to_string(),
            opt(b[0]),
            opt(b[1]),
            opt(b[2]),
            opt(b[3]),
            opt(f.eye_midpoint.map(|e| e.x)),
            opt(f.eye_midpoint.map(|e| e.y)),
        ]
    });
    write_atomic(path, &emit_csv(&provenance.csv_header(), &FACE_COLUMNS, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    Radians,
    Degrees,
}

impl FromStr for AngleUnit {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "radians" | "rad" => Ok(AngleUnit::Radians),
            "degrees" | "deg" => Ok(AngleUnit::Degrees),
            other => Err(format!("unknown angle unit `{other}` (expected radians|degrees)")),
        }
    }
}

impl fmt::Display for AngleUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AngleUnit::Radians => "radians",
            AngleUnit::Degrees => "degrees",
        })
    }
}

fn parse_convention(s: &str) -> Option<GazeConvention> {
    match s {
        "camera_offset" => Some(GazeConvention::CameraOffset),
        "absolute" => Some(GazeConvention::Absolute),
        _ => None,
    }
}

fn convention_name(c: GazeConvention) -> &'static str {
    match c {
        GazeConvention::CameraOffset => "camera_offset",
        GazeConvention::Absolute => "absolute",
    }
}

/// Predictions of one file, angles converted to radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub unit: AngleUnit,
    /// From the optional `# convention=` header.
    pub convention: Option<GazeConvention>,
    pub predictions: Vec<GazePrediction>,
}

const PREDICTION_COLUMNS: [&str; 4] = ["frame_id", "method", "yaw", "pitch"];

/// Reads `frame_id,method,yaw,pitch`. The `# unit=` header is mandatory.
pub fn read_predictions(path: &Path) -> Result<PredictionTable> {
    let t = read_table(path, &PREDICTION_COLUMNS)?;
    let unit: AngleUnit = t
        .meta
        .get("unit")
        .ok_or_else(|| parse_error(path, 1, "missing `# unit=radians|degrees` header"))?
        .parse()
        .map_err(|e: String| parse_error(path, 1, e))?;
    let convention = match t.meta.get("convention") {
        None => None,
        Some(c) => Some(
            parse_convention(c)
                .ok_or_else(|| parse_error(path, 1, format!("unknown convention `{c}`")))?,
        ),
    };
    let scale = match unit {
        AngleUnit::Radians => 1.0,
        AngleUnit::Degrees => 1f64.to_radians(),
    };
    let mut predictions = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        predictions.push(GazePrediction {
            frame_id: t.text(rec, "frame_id").to_string(),
            method_id: t.text(rec, "method").to_string(),
            angles: YawPitch::new(
                t.finite(*line, rec, "yaw")? * scale,
                t.finite(*line, rec, "pitch")? * scale,
            ),
            convention: convention.unwrap_or(GazeConvention::Absolute),
        });
    }
    Ok(PredictionTable {
        unit,
        convention,
        predictions,
    })
}

pub fn write_predictions(path: &Path, table: &PredictionTable, provenance: &Provenance) -> Result<()> {
    let mut meta = provenance.csv_header();
    meta.push(("unit".into(), table.unit.to_string()));
    if let Some(c) = table.convention {
        meta.push(("convention".into(), convention_name(c).into()));
    }
    let to_unit = |v: f64| match table.unit {
        AngleUnit::Radians => v,
        AngleUnit::Degrees => v.to_degrees(),
    };
    let rows = table.predictions.iter().map(|p| {
        vec![
            p.frame_id.clone(),
            p.method_id.clone(),
            to_unit(p.angles.yaw).to_string(),
            to_unit(p.angles.pitch).to_string(),
        ]
    });
    write_atomic(path, &emit_csv(&meta, &PREDICTION_COLUMNS, rows))
}

const RECORD_COLUMNS: [&str; 6] = [
    "frame_id",
    "method",
    "target_id",
    "angular_error_deg",
    "surface_distance_m",
    "tags",
];

/// Per-frame records. Tags are `;`-separated; a missed surface is `inf`.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let t = read_table(path, &RECORD_COLUMNS)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        out.push(EvalRecord {
            frame_id: t.text(rec, "frame_id").to_string(),
            method_id: t.text(rec, "method").to_string(),
            target_id: t.parse(*line, rec, "target_id")?,
            angular_error_deg: t.parse(*line, rec, "angular_error_deg")?,
            surface_distance_m: t.parse(*line, rec, "surface_distance_m")?,
            tags: t
                .text(rec, "tags")
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[EvalRecord], provenance: &Provenance) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            r.frame_id.clone(),
            r.method_id.clone(),
            r.target_id.to_string(),
            r.angular_error_deg.to_string(),
            r.surface_distance_m.to_string(),
            r.tags.iter().cloned().collect::<Vec<_>>().join(";"),
        ]
    });
    write_atomic(path, &emit_csv(&provenance.csv_header(), &RECORD_COLUMNS, rows))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use proptest::prelude::*;

    use super::*;
    use crate::calibration::CameraId;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn corner_file_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "# image_size=1280x960\nview_id,camera,i,j,u,v\nv0,left,0,1,10.5,20\nv0,right,2,3,1,2\n",
        );
        let t = read_corners(&p).unwrap();
        assert_eq!(t.image_size, Some((1280, 960)));
        assert_eq!(t.corners.len(), 2);
        assert_eq!(t.corners[0].grid_index, (0, 1));
        assert_eq!(t.corners[1].camera, CameraId::Right);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "# image_size=64x48\nview_id,camera,i,j,u,v\nv0,left,0,1,10.5,20\nv0,left,0,2,abc,20\n",
        );
        match read_corners(&p) {
            Err(Error::Parse { file, line, message }) => {
                assert_eq!(file, p);
                assert_eq!(line, 4);
                assert!(message.contains("`u`"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let p = write(dir.path(), "d.csv", "view_id,camera,i,j,u,v\nv0,middle,0,1,1,2\n");
        assert!(matches!(read_corners(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn predictions_need_unit() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "frame_id,method,yaw,pitch\nf0,m,0.1,0.2\n");
        assert!(matches!(read_predictions(&p), Err(Error::Parse { line: 1, .. })));
        let p = write(
            dir.path(),
            "q.csv",
            "# unit=degrees\nframe_id,method,yaw,pitch\nf0,m,90,-45\n",
        );
        let t = read_predictions(&p).unwrap();
        assert_eq!(t.unit, AngleUnit::Degrees);
        assert!((t.predictions[0].angles.yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((t.predictions[0].angles.pitch + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn partial_bbox_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "f.csv",
            "frame_id,camera,u_min,v_min,u_max,v_max,eye_u,eye_v\nf0,left,1,2,3,,5,6\n",
        );
        assert!(matches!(read_faces(&p), Err(Error::Parse { line: 2, .. })));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e4..1e4f64, -1e-6..1e-6f64, Just(0.0)]
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,8}"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn corners_round_trip(
            rows in prop::collection::vec((ident(), any::<bool>(), 0..20u32, 0..20u32, finite(), finite()), 0..20),
            size in prop::option::of((1..5000u32, 1..5000u32)),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let table = CornerTable {
                image_size: size,
                corners: rows
                    .into_iter()
                    .map(|(v, left, i, j, u, w)| CornerObservation {
                        view_id: v,
                        camera: if left { CameraId::Left } else { CameraId::Right },
                        grid_index: (i, j),
                        pixel: Vector2::new(u, w),
                    })
                    .collect(),
            };
            let p = dir.path().join("c.csv");
            write_corners(&p, &table, &Provenance::default()).unwrap();
            prop_assert_eq!(read_corners(&p).unwrap(), table);
        }

        #[test]
        fn faces_round_trip(
            rows in prop::collection::vec(
                (ident(), any::<bool>(), prop::option::of((finite(), finite(), 0.0..50f64, 0.0..50f64)), prop::option::of((finite(), finite()))),
                0..20,
            ),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let faces: Vec<FaceObservation> = rows
                .into_iter()
                .filter(|r| r.2.is_some() || r.3.is_some())
                .map(|(f, left, b, e)| FaceObservation {
                    frame_id: f,
                    camera: if left { CameraId::Left } else { CameraId::Right },
                    bbox: b.map(|(u, v, w, h)| [u, v, u + w, v + h]),
                    eye_midpoint: e.map(|(u, v)| Vector2::new(u, v)),
                })
                .collect();
            let p = dir.path().join("f.csv");
            write_faces(&p, &faces, &Provenance::default()).unwrap();
            prop_assert_eq!(read_faces(&p).unwrap(), faces);
        }

        #[test]
        fn predictions_round_trip(
            rows in prop::collection::vec((ident(), ident(), -3.0..3.0f64, -1.5..1.5f64), 0..20),
            offset in any::<bool>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let convention = if offset { GazeConvention::CameraOffset } else { GazeConvention::Absolute };
            let table = PredictionTable {
                unit: AngleUnit::Radians,
                convention: Some(convention),
                predictions: rows
                    .into_iter()
                    .map(|(f, m, y, p)| GazePrediction {
                        frame_id: f,
                        method_id: m,
                        angles: YawPitch::new(y, p),
                        convention,
                    })
                    .collect(),
            };
            let p = dir.path().join("p.csv");
            write_predictions(&p, &table, &Provenance::default()).unwrap();
            prop_assert_eq!(read_predictions(&p).unwrap(), table);
        }

        #[test]
        fn records_round_trip(
            rows in prop::collection::vec(
                (ident(), ident(), 0..50u32, 0.0..180f64, prop_oneof![0.0..2.0f64, Just(f64::INFINITY)], prop::collection::btree_set(ident(), 0..3)),
                0..20,
            ),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let records: Vec<EvalRecord> = rows
                .into_iter()
                .map(|(f, m, t, a, d, tags)| EvalRecord {
                    frame_id: f,
                    method_id: m,
                    target_id: t,
                    angular_error_deg: a,
                    surface_distance_m: d,
                    tags,
                })
                .collect();
            let p = dir.path().join("r.csv");
            write_records(&p, &records, &Provenance::default()).unwrap();
            prop_assert_eq!(read_records(&p).unwrap(), records);
        }
    }
}
