//! On-disk formats and the command-line surface.
//!
//! Configs, calibrations, manifests and report bundles are JSON; bulk
//! per-frame tables are CSV. CSV files may start with `# key=value` lines
//! carrying metadata such as the angle unit of a prediction file.
//! Everything is written through a temporary file and renamed into place.

pub mod cli;
mod manifest;
mod report;
mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use manifest::{CalibrationPaths, DatasetManifest, LoadedDataset, MethodEntry, PlanePoseFile};
pub use report::{
    build_report, render_table, write_cdf_csv, write_report_csvs, CdfCurve, MethodHistogram, ReportBundle,
    ReportOptions, SummaryRow, ALL,
};
pub use tables::{
    read_corners, read_faces, read_predictions, read_records, write_corners, write_faces, write_predictions,
    write_records, AngleUnit, CornerTable, PredictionTable,
};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool version, content hashes of every input and the effective
/// configuration, embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// input label → sha256 of its bytes
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }
}

impl Provenance {
    pub fn with_config(config: &impl Serialize) -> Self {
        Self {
            config: serde_json::to_value(config).expect("config serializes"),
            ..Default::default()
        }
    }

    /// Records the hash of a file under `label`.
    pub fn add_file(&mut self, label: impl Into<String>, path: &Path) -> Result<String> {
        let hash = sha256_file(path)?;
        self.inputs.insert(label.into(), hash.clone());
        Ok(hash)
    }

    /// `# key=value` header lines for CSV outputs.
    pub(crate) fn csv_header(&self) -> Vec<(String, String)> {
        let mut out = vec![("tool".to_string(), format!("{} {}", self.tool, self.version))];
        for (k, v) in &self.inputs {
            out.push((format!("input.{k}"), v.clone()));
        }
        out
    }
}

/// A JSON payload together with its provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub data: T,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&read_bytes(path)?))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        file: path.into(),
        line: 0,
        message: format!("not UTF-8: {e}"),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.into(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes to JSON");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::field("path", format!("`{}` has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Resolves `rel` against the directory holding `base`.
pub(crate) fn resolve(base: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(rel)
    }
}

/// Serde helper for floats that may be infinite, written as `"inf"`.
pub(crate) mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.json");
        write_json(&path, &vec![1.5, 2.0]).unwrap();
        write_json(&path, &vec![3.0]).unwrap();
        let back: Vec<f64> = read_json(&path).unwrap();
        assert_eq!(back, vec![3.0]);
        let names: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn json_parse_error_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"a\": 1,\n  oops\n}").unwrap();
        match read_json::<serde_json::Value>(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stamped_round_trip() {
        let mut p = Provenance::with_config(&serde_json::json!({"k": 1}));
        p.inputs.insert("a".into(), sha256_bytes(b"abc"));
        let s = Stamped {
            provenance: p,
            data: crate::plane_pose::GridConfig::default_display(),
        };
        let back: Stamped<crate::plane_pose::GridConfig> = serde_json::from_slice(&to_json_bytes(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
