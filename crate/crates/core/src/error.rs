use thiserror::Error;

/// Errors produced by the quadbox library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polygon has {0} vertices, at least 3 are required")]
    EmptyPolygon(usize),

    #[error("quadrilateral is not convex")]
    NonConvex,

    #[error("IOU is undefined: both shapes have zero area")]
    UndefinedIou,

    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("invalid quadrilateral: {0}")]
    InvalidQuad(&'static str),

    #[error("default box has zero width or height")]
    DegenerateAnchor,

    #[error("invalid regression target: {0}")]
    InvalidTarget(&'static str),

    #[error("decoded value overflowed")]
    Overflow,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("ground-truth box has zero area")]
    DegenerateGt,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short stable identifier for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPolygon(_) => "empty_polygon",
            Error::NonConvex => "non_convex",
            Error::UndefinedIou => "undefined_iou",
            Error::Degenerate(_) => "degenerate",
            Error::NonFinite => "non_finite",
            Error::InvalidQuad(_) => "invalid_quad",
            Error::DegenerateAnchor => "degenerate_anchor",
            Error::InvalidTarget(_) => "invalid_target",
            Error::Overflow => "overflow",
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::DegenerateGt => "degenerate_gt",
            Error::Parse { .. } => "parse",
            Error::Dataset(_) => "dataset",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
