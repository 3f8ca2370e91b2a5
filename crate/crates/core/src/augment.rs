//! Random-crop augmentation constrained by Jaccard overlap or object coverage.
//!
//! Only geometry is transformed; pixel resampling is left to the caller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{canonicalize_quad, CanonicalQuad};
use crate::error::{Error, Result};
use crate::geometry::{HRect, Point};

/// Minimum overlap / coverage thresholds a crop may be asked to satisfy.
pub const CROP_THRESHOLDS: [f64; 6] = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    Jaccard,
    Coverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSample {
    /// Crop rectangle in image pixels.
    pub rect: HRect,
    pub constraint: Constraint,
    pub threshold: f64,
    /// Number of sampled rectangles up to and including this one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Crop area as a fraction of the image area.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Crop `w/h` relative to the image's `w/h`.
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub max_attempts: u32,
    pub output_size: (f64, f64),
    pub thresholds: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            min_scale: 0.3,
            max_scale: 1.0,
            min_aspect: 0.5,
            max_aspect: 2.0,
            max_attempts: 50,
            output_size: (384.0, 384.0),
            thresholds: CROP_THRESHOLDS.to_vec(),
            constraints: vec![Constraint::Jaccard, Constraint::Coverage],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.min_scale) && self.min_scale <= self.max_scale && self.max_scale <= 1.0) {
            return Err(Error::Config("crop scale range must satisfy 0 < min <= max <= 1".into()));
        }
        if !(pos(self.min_aspect) && self.min_aspect <= self.max_aspect && self.max_aspect.is_finite()) {
            return Err(Error::Config("crop aspect range must satisfy 0 < min <= max".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if !(pos(self.output_size.0) && pos(self.output_size.1)) {
            return Err(Error::Config("output size must be positive".into()));
        }
        if self.thresholds.is_empty() || self.constraints.is_empty() {
            return Err(Error::Config("threshold and constraint lists must be non-empty".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !CROP_THRESHOLDS.contains(t)) {
            return Err(Error::Config(format!(
                "crop threshold {t} is not one of 0, 0.1, 0.3, 0.5, 0.7, 0.9"
            )));
        }
        Ok(())
    }
}

/// `(J, C)`: Jaccard overlap `|B∩G|/|B∪G|` and coverage `|B∩G|/|G|`.
pub fn jaccard_coverage(b: &HRect, g: &HRect) -> Result<(f64, f64)> {
    let ga = g.area();
    if ga.is_nan() || ga <= 0.0 {
        return Err(Error::DegenerateGt);
    }
    let ba = b.area().max(0.0);
    let inter = b.intersection_area(g).min(ba).min(ga);
    // union >= |G| keeps C >= J under rounding
    let union = (ba + ga - inter).max(ga);
    Ok(((inter / union).clamp(0.0, 1.0), (inter / ga).clamp(0.0, 1.0)))
}

fn satisfies(rect: &HRect, gts: &[HRect], constraint: Constraint, threshold: f64) -> bool {
    gts.iter().any(|g| match jaccard_coverage(rect, g) {
        Ok((j, c)) => match constraint {
            Constraint::Jaccard => j >= threshold,
            Constraint::Coverage => c >= threshold,
        },
        Err(_) => false,
    })
}

/// Re-checks a sample against the ground truths it was drawn for.
pub fn crop_satisfies(crop: &CropSample, gts: &[HRect]) -> bool {
    crop.threshold == 0.0 || satisfies(&crop.rect, gts, crop.constraint, crop.threshold)
}

fn draw_rect(rng: &mut ChaCha8Rng, image: (f64, f64), cfg: &AugmentConfig) -> HRect {
    let (iw, ih) = image;
    let scale = rng.random_range(cfg.min_scale..=cfg.max_scale);
    let aspect = rng.random_range(cfg.min_aspect..=cfg.max_aspect);
    let w = (iw * (scale * aspect).sqrt()).min(iw);
    let h = (ih * (scale / aspect).sqrt()).min(ih);
    let x = rng.random_range(0.0..=(iw - w));
    let y = rng.random_range(0.0..=(ih - h));
    HRect::from_bounds(x, y, x + w, y + h)
}

/// Rejection-samples a crop for a fixed constraint and threshold. A zero
/// threshold accepts the first draw; otherwise some ground truth must reach
/// the threshold within `max_attempts` draws.
pub fn sample_crop_with(
    image_size: (f64, f64),
    gts: &[HRect],
    cfg: &AugmentConfig,
    constraint: Constraint,
    threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Option<CropSample> {
    if threshold > 0.0 && gts.is_empty() {
        return None;
    }
    for attempt in 1..=cfg.max_attempts {
        let rect = draw_rect(rng, image_size, cfg);
        if threshold == 0.0 || satisfies(&rect, gts, constraint, threshold) {
            return Some(CropSample { rect, constraint, threshold, attempts: attempt });
        }
    }
    None
}

/// Picks a constraint type and threshold uniformly from the config, then
/// samples a crop. Deterministic in `seed`.
pub fn sample_crop(
    image_size: (f64, f64),
    gts: &[CanonicalQuad],
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Option<CropSample>> {
    cfg.validate()?;
    if !(image_size.0 > 0.0 && image_size.1 > 0.0) {
        return Err(Error::Config("image size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constraint = cfg.constraints[rng.random_range(0..cfg.constraints.len())];
    let threshold = cfg.thresholds[rng.random_range(0..cfg.thresholds.len())];
    let rects: Vec<HRect> = gts.iter().map(|g| g.enclosing).collect();
    Ok(sample_crop_with(image_size, &rects, cfg, constraint, threshold, &mut rng))
}

/// Keeps ground truths whose enclosing-rect center lies in the crop, maps
/// them into `output_size` coordinates and re-canonicalizes. Kept quads are
/// not clipped.
pub fn apply_crop(
    crop: &CropSample,
    gts: &[CanonicalQuad],
    output_size: (f64, f64),
) -> Result<Vec<CanonicalQuad>> {
    let r = crop.rect;
    if !(r.w > 0.0 && r.h > 0.0 && output_size.0 > 0.0 && output_size.1 > 0.0) {
        return Err(Error::Config("crop and output sizes must be positive".into()));
    }
    let (ox, oy) = (r.xmin(), r.ymin());
    let (sx, sy) = (output_size.0 / r.w, output_size.1 / r.h);
    gts.iter()
        .filter(|g| r.contains(Point::new(g.enclosing.cx, g.enclosing.cy)))
        .map(|g| {
            let v = g.quad.v.map(|p| Point::new((p.x - ox) * sx, (p.y - oy) * sy));
            canonicalize_quad(v)
        })
        .collect()
}
