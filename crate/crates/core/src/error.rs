use std::path::PathBuf;

use crate::calibration::CalibrationResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the exit code the command line maps them to,
/// see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("gaze ray is parallel to the plane")]
    NoIntersection,
    #[error("gaze ray points away from the plane (alpha = {alpha})")]
    GazeAwayFromPlane { alpha: f64 },
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("distortion inversion did not converge for pixel ({u}, {v})")]
    NotInvertible { u: f64, v: f64 },
    #[error("ray is expressed in the {found} frame, transform expects {expected}")]
    FrameMismatch {
        expected: crate::geom::Frame,
        found: crate::geom::Frame,
    },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("optimization did not converge after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        best: Box<CalibrationResult>,
    },
    #[error("optimization did not converge: {0}")]
    SolverFailure(String),
    #[error("no views shared by both cameras")]
    NoSharedViews,
    #[error("unknown target id {0}")]
    UnknownTarget(u32),
    #[error("back-projected rays are parallel")]
    ParallelRays,
    #[error("missing observation: {0}")]
    MissingObservation(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no records matched the selection")]
    EmptySelection,
    #[error("could not sample a valid head position after {0} attempts")]
    ResampleExceeded(usize),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/parse, 2 numerical failure, 3 degenerate data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidField { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::FrameMismatch { .. } => 1,
            Error::IllConditioned(_)
            | Error::NoConvergence { .. }
            | Error::SolverFailure(_)
            | Error::NotInvertible { .. } => 2,
            _ => 3,
        }
    }
}
