//! The `gazeplane` command line.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 numerical failure,
//! 3 degenerate data.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::manifest::left_corners;
use super::{
    build_report, read_corners, read_json, render_table, write_cdf_csv, write_corners, write_faces,
    write_json, write_predictions, write_records, write_report_csvs, AngleUnit, CalibrationPaths, CornerTable,
    DatasetManifest, MethodEntry, PlanePoseFile, PredictionTable, Provenance, ReportBundle, ReportOptions, Stamped,
};
use crate::calibration::{calibrate_rig, CalibrationOptions, CalibrationResult, CameraId};
use crate::error::{Error, Result};
use crate::geom::CameraIntrinsics;
use crate::metrics::{ErrorKind, HistogramBins};
use crate::pipeline::{self, EvalInputs};
use crate::plane_pose::{estimate_plane_pose, GridConfig};
use crate::reconstruction::DEFAULT_RAY_GAP_WARN;
use crate::synthetic::{generate_scene, perturb, NoiseSpec, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "gazeplane", version, about = "Stereo gaze geometry on a shared work surface")]
pub struct Cli {
    /// Seed for every random draw (synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-frame work; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with default settings, see FORMATS.md.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate both cameras and the stereo rig from checkerboard corners.
    Calibrate(CalibrateArgs),
    /// Estimate the camera-to-workspace transform from display corners.
    PlanePose(PlanePoseArgs),
    /// Evaluate gaze predictions listed in a dataset manifest.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with known ground truth.
    Synth(SynthArgs),
    /// Print a report bundle as a table and export CDF CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Corner CSV files (view_id,camera,i,j,u,v); may be repeated.
    #[arg(long, required = true, num_args = 1..)]
    pub corners: Vec<PathBuf>,
    /// Checkerboard grid config (JSON).
    #[arg(long)]
    pub board: PathBuf,
    /// Output directory for left.json, right.json and stereo.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Image size WIDTHxHEIGHT when the corner file has no header.
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<(u32, u32)>,
    /// Estimate skew as well.
    #[arg(long)]
    pub free_skew: bool,
    /// Estimate the sixth-order radial coefficient k3 as well.
    #[arg(long)]
    pub free_k3: bool,
}

#[derive(Debug, Args)]
pub struct PlanePoseArgs {
    /// Display corners seen by the left camera (corner CSV).
    #[arg(long)]
    pub corners: PathBuf,
    /// Display grid config (JSON).
    #[arg(long)]
    pub grid: PathBuf,
    /// Left camera calibration (left.json) or bare intrinsics.
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Output plane pose file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the report bundle and CSVs.
    #[arg(long)]
    pub out: PathBuf,
    /// Only evaluate these methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Subsets to report besides `all`; defaults to every tag.
    #[arg(long, value_delimiter = ',')]
    pub tags: Option<Vec<String>>,
    /// Extra precision thresholds in cm (10, 20 and 50 are always reported).
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Ray gap in meters above which a triangulation is logged.
    #[arg(long)]
    pub ray_gap_warn: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene spec (JSON); the tabletop scene when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Number of frames, overriding the scene spec.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Noise spec (JSON); combined with the sigma flags below.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Corner noise, pixels.
    #[arg(long, allow_negative_numbers = true)]
    pub corner_sigma: Option<f64>,
    /// Face observation noise, pixels.
    #[arg(long, allow_negative_numbers = true)]
    pub face_sigma: Option<f64>,
    /// Isotropic gaze noise, degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub gaze_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report bundle written by `evaluate`.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Only these methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Only this subset (`all` or a tag).
    #[arg(long)]
    pub filter: Option<String>,
    /// Directory for the CDF CSVs of the selected rows.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings read from `--config`. Command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub thresholds_cm: Option<Vec<f64>>,
    pub tags: Option<Vec<String>>,
    pub ray_gap_warn_m: Option<f64>,
    pub fix_skew: Option<bool>,
    pub fix_k3: Option<bool>,
    pub max_iterations: Option<usize>,
    pub histogram_bin_deg: Option<f64>,
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not WIDTHxHEIGHT"))?;
    Ok((
        w.parse().map_err(|e| format!("width: {e}"))?,
        h.parse().map_err(|e| format!("height: {e}"))?,
    ))
}

fn label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn calibrate(args: &CalibrateArgs, config: &RunConfig) -> Result<()> {
    let board: GridConfig = read_json(&args.board)?;
    board.validate()?;
    let mut prov = Provenance::with_config(config);
    prov.add_file(format!("board:{}", label(&args.board)), &args.board)?;
    let mut corners = Vec::new();
    let mut size = args.image_size;
    for path in &args.corners {
        let table = read_corners(path)?;
        prov.add_file(format!("corners:{}", label(path)), path)?;
        match (size, table.image_size) {
            (None, s) => size = s,
            (Some(a), Some(b)) if args.image_size.is_none() && a != b => {
                return Err(Error::field(
                    "image_size",
                    format!("{} says {}x{}, earlier files {}x{}", path.display(), b.0, b.1, a.0, a.1),
                ))
            }
            _ => {}
        }
        corners.extend(table.corners);
    }
    let image_size = size.ok_or_else(|| {
        Error::field("image_size", "no `# image_size=` header in the corner files; pass --image-size")
    })?;

    let mut options = CalibrationOptions {
        fix_skew: !args.free_skew && config.fix_skew.unwrap_or(true),
        fix_k3: !args.free_k3 && config.fix_k3.unwrap_or(true),
        ..Default::default()
    };
    if let Some(n) = config.max_iterations {
        options.lm.max_iterations = n;
    }
    let cal = match calibrate_rig(&corners, &board, image_size, &options) {
        Ok(c) => c,
        Err(Error::NoConvergence { iterations, best }) => {
            print_view_rms("best", &best);
            return Err(Error::NoConvergence { iterations, best });
        }
        Err(e) => return Err(e),
    };
    for (name, result) in [("left", &cal.left), ("right", &cal.right)] {
        print_view_rms(name, result);
    }
    println!(
        "stereo baseline {:.2} mm over {} shared views",
        cal.rig.baseline() * 1e3,
        crate::calibration::shared_views(&cal.left, &cal.right).len()
    );
    let stamp = |data| Stamped {
        provenance: prov.clone(),
        data,
    };
    write_json(&args.out.join("left.json"), &stamp(cal.left))?;
    write_json(&args.out.join("right.json"), &stamp(cal.right))?;
    write_json(
        &args.out.join("stereo.json"),
        &Stamped {
            provenance: prov.clone(),
            data: cal.rig,
        },
    )
}

fn print_view_rms(name: &str, result: &CalibrationResult) {
    let k = &result.intrinsics;
    println!(
        "{name}: fx {:.3} fy {:.3} cx {:.3} cy {:.3} rms {:.3e} px",
        k.fx, k.fy, k.cx, k.cy, result.rms_reprojection
    );
    for (view, rms) in &result.per_view_rms {
        println!("  {view:<12} rms {rms:.3e} px");
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IntrinsicsFile {
    Calibration(Box<CalibrationResult>),
    Bare(CameraIntrinsics),
}

fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    Ok(match read_json::<IntrinsicsFile>(path)? {
        IntrinsicsFile::Calibration(c) => c.intrinsics,
        IntrinsicsFile::Bare(k) => k,
    })
}

fn plane_pose(args: &PlanePoseArgs, config: &RunConfig) -> Result<()> {
    let grid: GridConfig = read_json(&args.grid)?;
    let k = read_intrinsics(&args.intrinsics)?;
    let table = read_corners(&args.corners)?;
    let mut prov = Provenance::with_config(config);
    let grid_sha256 = prov.add_file(format!("grid:{}", label(&args.grid)), &args.grid)?;
    prov.add_file(format!("corners:{}", label(&args.corners)), &args.corners)?;
    prov.add_file(format!("intrinsics:{}", label(&args.intrinsics)), &args.intrinsics)?;
    let corners = left_corners(&table);
    if corners.len() < table.corners.len() {
        warn!("ignoring {} right-camera rows", table.corners.len() - corners.len());
    }
    let pose = estimate_plane_pose(&corners, &grid, &k)?;
    let t = pose.transform.inverse().translation;
    println!(
        "grid origin at ({:.4}, {:.4}, {:.4}) m in the camera frame, rms {:.3e} px",
        t.x, t.y, t.z, pose.rms_reprojection
    );
    println!("grid sha256 {grid_sha256}");
    write_json(
        &args.out,
        &Stamped {
            provenance: prov,
            data: PlanePoseFile { grid_sha256, pose },
        },
    )
}

fn evaluate(args: &EvaluateArgs, config: &RunConfig) -> Result<()> {
    let data = DatasetManifest::load(&args.manifest, args.methods.as_deref())?;
    let ray_gap_warn = args
        .ray_gap_warn
        .or(config.ray_gap_warn_m)
        .unwrap_or(DEFAULT_RAY_GAP_WARN);
    let mut inputs = EvalInputs::new(
        &data.rig,
        &data.plane,
        &data.grid,
        &data.frames,
        &data.faces,
        &data.predictions,
        &data.methods,
    );
    inputs.ray_gap_warn = ray_gap_warn;
    let output = pipeline::evaluate(&inputs)?;
    if !output.skipped.is_empty() {
        warn!("{} (frame, method) pairs skipped, see skipped.csv", output.skipped.len());
    }

    let bins = match config.histogram_bin_deg {
        Some(w) => HistogramBins::uniform((-90.0, 90.0), (-120.0, 30.0), w)?,
        None => HistogramBins::default(),
    };
    let options = ReportOptions {
        tags: args.tags.clone().or_else(|| config.tags.clone()),
        thresholds_cm: args
            .thresholds
            .clone()
            .or_else(|| config.thresholds_cm.clone())
            .unwrap_or_default(),
        bins,
    };
    let mut prov = data.provenance.clone();
    prov.config = serde_json::json!({
        "config": config,
        "methods": args.methods,
        "tags": options.tags,
        "thresholds_cm": options.thresholds_cm,
        "ray_gap_warn_m": ray_gap_warn,
    });
    let bundle = build_report(&output, &data.methods, &data.frames, &options, prov.clone())?;
    if bundle.rows.is_empty() {
        println!("no frames matched");
        return Err(Error::EmptySelection);
    }
    write_json(&args.out.join("report.json"), &bundle)?;
    write_records(&args.out.join("records.csv"), &output.records(), &prov)?;
    write_report_csvs(&args.out, &bundle)?;
    print!("{}", render_table(&bundle.rows.iter().collect::<Vec<_>>()));
    Ok(())
}

fn synth(args: &SynthArgs, seed: Option<u64>, config: &RunConfig) -> Result<()> {
    let mut prov = Provenance::default();
    let mut spec = match &args.scene {
        Some(p) => {
            prov.add_file(format!("scene:{}", label(p)), p)?;
            read_json::<SceneSpec>(p)?
        }
        None => SceneSpec::tabletop(200, 42),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = args.frames {
        spec.frames = n;
    }
    let mut noise = match &args.noise {
        Some(p) => {
            prov.add_file(format!("noise:{}", label(p)), p)?;
            read_json::<NoiseSpec>(p)?
        }
        None => NoiseSpec::default(),
    };
    if let Some(v) = args.corner_sigma {
        noise.corner_px_sigma = v;
    }
    if let Some(v) = args.face_sigma {
        noise.face_px_sigma = v;
    }
    if let Some(v) = args.gaze_sigma {
        noise.gaze_angle_sigma_deg = v;
    }
    noise.validate()?;
    spec.validate()?;
    prov.config = serde_json::json!({ "config": config, "seed": spec.seed, "frames": spec.frames, "noise": noise });

    let clean = generate_scene(&spec)?;
    let data = perturb(&clean, &noise, spec.seed)?;
    let out = &args.out;
    let stamped = |data| Stamped {
        provenance: prov.clone(),
        data,
    };
    write_json(&out.join("scene.json"), &stamped(spec.clone()))?;
    write_json(
        &out.join("noise.json"),
        &Stamped {
            provenance: prov.clone(),
            data: noise,
        },
    )?;
    for (name, grid) in [("grid.json", &spec.grid), ("board.json", &spec.board)] {
        write_json(
            &out.join(name),
            &Stamped {
                provenance: prov.clone(),
                data: grid.clone(),
            },
        )?;
    }
    write_corners(
        &out.join("calibration_corners.csv"),
        &CornerTable {
            image_size: Some(spec.rig.left.image_size),
            corners: data.calibration_corners.clone(),
        },
        &prov,
    )?;
    write_corners(
        &out.join("plane_corners.csv"),
        &CornerTable {
            image_size: Some(spec.rig.left.image_size),
            corners: data
                .plane_corners
                .iter()
                .map(|(idx, px)| crate::calibration::CornerObservation {
                    view_id: "display".into(),
                    camera: CameraId::Left,
                    grid_index: *idx,
                    pixel: *px,
                })
                .collect(),
        },
        &prov,
    )?;
    write_faces(&out.join("faces.csv"), &data.faces, &prov)?;

    let mut methods = Vec::new();
    for m in &spec.methods {
        let rel = PathBuf::from("predictions").join(format!("{}.csv", m.id));
        write_predictions(
            &out.join(&rel),
            &PredictionTable {
                unit: AngleUnit::Radians,
                convention: Some(m.convention),
                predictions: data
                    .predictions
                    .iter()
                    .filter(|p| p.method_id == m.id)
                    .cloned()
                    .collect(),
            },
            &prov,
        )?;
        methods.push(MethodEntry {
            id: m.id.clone(),
            predictions: rel,
            convention: m.convention,
            head_source: m.head_source,
        });
    }
    let truth_rows = data.truth.iter().map(|t| {
        vec![
            t.meta.frame_id.clone(),
            t.meta.target_id.to_string(),
            t.head.x.to_string(),
            t.head.y.to_string(),
            t.head.z.to_string(),
        ]
    });
    super::write_atomic(
        &out.join("truth.csv"),
        &super::tables::emit_csv(
            &prov.csv_header(),
            &["frame_id", "target_id", "head_x_m", "head_y_m", "head_z_m"],
            truth_rows,
        ),
    )?;
    let manifest = DatasetManifest {
        grid_config: "grid.json".into(),
        calibration: CalibrationPaths {
            left: "calibration/left.json".into(),
            right: "calibration/right.json".into(),
            stereo: "calibration/stereo.json".into(),
        },
        plane_corners: "plane_corners.csv".into(),
        plane_pose: Some("calibration/plane_pose.json".into()),
        faces: "faces.csv".into(),
        methods,
        frames: data.frames(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    info!("wrote {} frames to {}", spec.frames, out.display());
    println!(
        "synthetic dataset: {} frames, {} calibration views, seed {}",
        spec.frames, spec.calibration_views, spec.seed
    );
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let bundle: ReportBundle = read_json(&args.bundle)?;
    let rows = bundle.select(&args.methods, args.filter.as_deref());
    if rows.is_empty() {
        println!("no frames matched");
        return Err(Error::EmptySelection);
    }
    print!("{}", render_table(&rows));
    if let Some(dir) = &args.out {
        for r in &rows {
            for kind in [ErrorKind::Distance, ErrorKind::Angular] {
                if let Some(c) = bundle.cdf(&r.method, &r.filter, kind) {
                    let name = format!(
                        "{}__{}__{}.csv",
                        r.method,
                        r.filter,
                        if kind == ErrorKind::Distance { "distance" } else { "angular" }
                    )
                    .replace(|c: char| !(c.is_ascii_alphanumeric() || "-._".contains(c)), "_");
                    write_cdf_csv(&dir.join(name), c, &bundle.provenance)?;
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config: RunConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Calibrate(a) => calibrate(a, &config),
        Command::PlanePose(a) => plane_pose(a, &config),
        Command::Evaluate(a) => evaluate(a, &config),
        Command::Synth(a) => synth(a, cli.seed, &config),
        Command::Report(a) => report(a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Calibrate(_) => "calibrate",
        Command::PlanePose(_) => "plane-pose",
        Command::Evaluate(_) => "evaluate",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let result = match cli.threads {
        Some(0) => Err(Error::field("threads", "must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::field("threads", e.to_string())),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if code == 1 {
                eprintln!("hint: run `gazeplane {} --help` for usage", command_name(&cli.command));
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "gazeplane", "synth", "--out", "x", "--seed", "7", "--threads", "2", "--gaze-sigma", "-1",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Synth(a) => assert_eq!(a.gaze_sigma, Some(-1.0)),
            _ => panic!(),
        }
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["gazeplane", "frobnicate"]), 1);
        assert_eq!(run(["gazeplane", "plane-pose", "--corners", "c.csv"]), 1);
        assert_eq!(run(["gazeplane", "--help"]), 0);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let r: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"thresholds": [5]}"#);
        assert!(r.is_err());
        let c: RunConfig = serde_json::from_str(r#"{"thresholds_cm": [5]}"#).unwrap();
        assert_eq!(c.thresholds_cm, Some(vec![5.0]));
    }

    #[test]
    fn size_parser() {
        assert_eq!(parse_size("1280x960"), Ok((1280, 960)));
        assert!(parse_size("1280").is_err());
    }
}
