use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid affine frame: {0}")]
    InvalidFrame(String),
    #[error("invalid label volume: {0}")]
    InvalidVolume(String),
    #[error("empty subregion: {0}")]
    EmptySubregion(String),
    #[error("at least two vertebrae are needed to fit a centerline, got {0}")]
    InsufficientVertebrae(usize),
    #[error("degenerate centerline: {0}")]
    DegenerateCenterline(String),
    #[error("no vertebral body voxels found in the volume")]
    EmptySpine,
    #[error("label dictionary error: {0}")]
    LabelDictionary(String),
    #[error("degenerate orientation: {0}")]
    DegenerateOrientation(String),
    #[error("ray origin lies outside the mask (occupancy {occupancy:.3})")]
    RayOriginOutside { occupancy: f64 },
    #[error("ray never sampled inside the mask")]
    RayMiss,
    #[error("bisection start lies outside the mask (occupancy {occupancy:.3})")]
    BisectionStartOutside { occupancy: f64 },
    #[error("bisection did not converge within {0} iterations")]
    BisectionDiverged(usize),
    #[error("degenerate phantom: {0}")]
    PhantomDegenerate(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("not a label map: {0}")]
    NotALabelMap(String),
    #[error("unsupported document version: {0}")]
    Version(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
