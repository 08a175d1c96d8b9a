use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("height field is not square: {width}x{height}")]
    NonSquare { width: usize, height: usize },

    #[error("height field dimension {0} is not a power of two")]
    NonPowerOfTwo(usize),

    #[error("sample out of [0,1] at texel ({x},{y}): {value}")]
    SampleOutOfRange { x: usize, y: usize, value: f64 },

    #[error("object point behind face plane (z = {z})")]
    BehindFacePlane { z: f64 },

    #[error("mip level {level} out of range (pyramid has {levels} levels)")]
    MipLevelOutOfRange { level: u32, levels: u32 },

    #[error("stitch: tiles have mixed resolutions ({a} vs {b})")]
    MixedResolutions { a: usize, b: usize },

    #[error("stitch: tiles span mixed faces ({a} vs {b})")]
    MixedFaces { a: u8, b: u8 },

    #[error("stitch: coverage gap in roi at texel ({x},{y})")]
    CoverageGap { x: i64, y: i64 },

    #[error("shadow ray has no horizontal footprint")]
    NoHorizontalFootprint,

    #[error("light angular radius must be positive (got {0})")]
    NonPositiveLightRadius(f64),

    #[error("image dimension mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("scene parse error: {0}")]
    SceneParse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("png encode error: {0}")]
    Png(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
