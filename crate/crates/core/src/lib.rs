//! Geometry, encoding, suppression and evaluation for oriented text boxes.
//!
//! Everything around an SSD-style oriented text detector except the network:
//! default-box grids, quadrilateral and rotated-rectangle regression
//! targets, ground-truth matching with the multibox loss, coverage-aware
//! crop sampling, cascaded NMS, ICDAR-style evaluation and
//! detection/recognition score fusion.

pub mod anchors;
pub mod augment;
pub mod bench;
pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod matching;
pub mod nms;
pub mod synth;

pub use anchors::{default_box_count, generate_default_boxes, AnchorConfig, DefaultBox, StageSpec};
pub use codec::{
    canonicalize_quad, decode_quad, decode_rrect, encode_quad, encode_rrect, quad_to_rrect,
    CanonicalQuad, QuadOffsets, RRectOffsets,
};
pub use config::Config;
pub use error::{Error, Result};
pub use geometry::{
    clip_convex, intersection_area, iou_hrect, iou_quad, iou_quad_lenient, min_bounding_hrect,
    rrect_to_quad, shoelace_area, HRect, Point, Polygon, Quad, RRect,
};
pub use nms::{cascaded_nms, nms_hrect, nms_quad, rescale_predictions, Prediction};
