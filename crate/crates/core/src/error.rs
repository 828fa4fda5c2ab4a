use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain model: {0}")]
    InvalidDomain(String),

    #[error("no valid scenario found after {attempts} attempts")]
    SamplingExhausted { attempts: usize },

    #[error("restriction of `{field}` is outside the parent model: {reason}")]
    RestrictionOutsideParent { field: &'static str, reason: String },

    #[error("end of road reached at arc position {arc_position:.3} m (road length {road_length:.3} m)")]
    EndOfRoad { arc_position: f64, road_length: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} labels vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },

    #[error("frame {0} carries no reference label for the oracle controller")]
    MissingReference(usize),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("simulated dataset ({sim} frames) is longer than the recording ({real} frames)")]
    SimLongerThanReal { sim: usize, real: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
