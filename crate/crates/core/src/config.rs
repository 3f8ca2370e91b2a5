//! Shared JSON configuration. Every section and field is optional.
//!
//! ```json
//! {
//!   "anchors":  { "input_size": 384, "aspect_ratios": [1, 2, 3, 5, 0.5, 0.333, 0.2],
//!                 "vertical_offsets": true,
//!                 "stages": [{ "map_w": 48, "map_h": 48, "scale": 0.06, "next_scale": 0.218 }] },
//!   "matching": { "threshold": 0.5, "alpha": 0.2, "neg_ratio": 3 },
//!   "nms":      { "thr1": 0.5, "thr2": 0.2, "score_threshold": 0.6 },
//!   "eval":     { "iou_threshold": 0.5 },
//!   "augment":  { "min_scale": 0.3, "max_scale": 1.0, "min_aspect": 0.5, "max_aspect": 2.0,
//!                 "max_attempts": 50, "output_size": [384, 384],
//!                 "thresholds": [0, 0.1, 0.3, 0.5, 0.7, 0.9],
//!                 "constraints": ["jaccard", "coverage"] },
//!   "fusion":   { "detection_threshold": 0.6, "recognition_threshold": 0.005 }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorConfig;
use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_IOU_THRESHOLD;
use crate::fusion::{combined_score, DEFAULT_DETECTION_THRESHOLD, DEFAULT_RECOGNITION_THRESHOLD};
use crate::matching::{DEFAULT_ALPHA, DEFAULT_MATCH_THRESHOLD, NEG_RATIO_STAGE1};
use crate::nms::{DEFAULT_HRECT_THRESHOLD, DEFAULT_QUAD_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingConfig {
    pub threshold: f64,
    pub alpha: f64,
    pub neg_ratio: f64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_MATCH_THRESHOLD, alpha: DEFAULT_ALPHA, neg_ratio: NEG_RATIO_STAGE1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsConfig {
    pub thr1: f64,
    pub thr2: f64,
    /// Detections scoring below this are dropped before suppression.
    pub score_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            thr1: DEFAULT_HRECT_THRESHOLD,
            thr2: DEFAULT_QUAD_THRESHOLD,
            score_threshold: DEFAULT_DETECTION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub detection_threshold: f64,
    pub recognition_threshold: f64,
    /// Defaults to the combined score of the two thresholds above.
    pub combined_threshold: Option<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            recognition_threshold: DEFAULT_RECOGNITION_THRESHOLD,
            combined_threshold: None,
        }
    }
}

impl FusionConfig {
    pub fn effective_threshold(&self) -> f64 {
        self.combined_threshold
            .unwrap_or_else(|| combined_score(self.detection_threshold, self.recognition_threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub anchors: AnchorConfig,
    pub matching: MatchingConfig,
    pub nms: NmsConfig,
    pub eval: EvalConfig,
    pub augment: AugmentConfig,
    pub fusion: FusionConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = Config::from_json("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.nms.thr1, 0.5);
        assert_eq!(c.nms.thr2, 0.2);
        assert_eq!(c.matching.alpha, 0.2);
        assert!((c.fusion.effective_threshold() - combined_score(0.6, 0.005)).abs() < 1e-15);
    }

    #[test]
    fn partial_sections_and_custom_stages() {
        let c = Config::from_json(
            r#"{"anchors": {"input_size": 768, "stages": [{"map_w": 3, "map_h": 3, "scale": 0.2, "next_scale": 0.3}]},
                "augment": {"constraints": ["coverage"]}, "eval": {"iou_threshold": 0.7}}"#,
        )
        .unwrap();
        assert_eq!(c.anchors.generate().unwrap().len(), 144);
        assert_eq!(c.eval.iou_threshold, 0.7);
        assert_eq!(c.augment.max_attempts, 50);
    }

    #[test]
    fn bad_json_is_a_config_error() {
        assert!(matches!(Config::from_json("{\"nms\": 3}"), Err(Error::Config(_))));
    }
}
