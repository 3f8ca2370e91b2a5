//! Synthetic scenes and model-free predictions.
//!
//! A scene is a set of non-overlapping rotated word boxes. Predictions are
//! produced the way a perfect detector would emit them: every default box
//! matched to a ground truth regresses exactly onto it (encode, then
//! decode), after which Gaussian jitter and low-scoring clutter are added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchors::{AnchorConfig, DefaultBox};
use crate::codec::{canonicalize_quad, decode_quad, encode_quad, CanonicalQuad};
use crate::error::{Error, Result};
use crate::eval::{DetectionEntry, GroundTruthEntry};
use crate::geometry::{min_bounding_hrect, HRect, Point, Quad};
use crate::matching::match_defaults;
use crate::nms::Prediction;

/// Scores of clutter boxes are drawn below this value.
pub const CLUTTER_MAX_SCORE: f64 = 0.5;
/// Scores of true predictions are `1 − ε` with `ε` below this value.
pub const TRUE_SCORE_SPREAD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub image_size: (f64, f64),
    pub gts: Vec<CanonicalQuad>,
    /// Per-coordinate jitter standard deviation, pixels.
    pub noise: f64,
    pub clutter: usize,
    pub seed: u64,
}

/// Rotated rectangle centered at `(cx, cy)`, `deg` degrees clockwise on screen.
pub fn rotated_rect(cx: f64, cy: f64, w: f64, h: f64, deg: f64) -> Quad {
    let (s, c) = deg.to_radians().sin_cos();
    Quad::new([(-w, -h), (w, -h), (w, h), (-w, h)].map(|(x, y)| {
        let (x, y) = (0.5 * x, 0.5 * y);
        Point::new(cx + x * c - y * s, cy + x * s + y * c)
    }))
}

/// A random convex quad inscribed in an ellipse of radius `r` and flattening
/// `squash` around `(cx, cy)`.
pub fn random_convex_quad(rng: &mut impl Rng, cx: f64, cy: f64, r: f64) -> Quad {
    let squash = rng.random_range(0.25..1.0);
    let rot: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let gaps: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
    let total: f64 = gaps.iter().sum();
    let (rs, rc) = rot.sin_cos();
    let mut ang = rng.random_range(0.0..std::f64::consts::TAU);
    let mut v = [Point::default(); 4];
    for (p, g) in v.iter_mut().zip(gaps) {
        let (s, c) = ang.sin_cos();
        let (x, y) = (r * c, r * squash * s);
        *p = Point::new(cx + x * rc - y * rs, cy + x * rs + y * rc);
        ang += std::f64::consts::TAU * g / total;
    }
    Quad::new(v)
}

fn rects_overlap(a: &HRect, b: &HRect, margin: f64) -> bool {
    a.xmin() < b.xmax() + margin
        && b.xmin() < a.xmax() + margin
        && a.ymin() < b.ymax() + margin
        && b.ymin() < a.ymax() + margin
}

impl SyntheticScene {
    /// Places up to `n_words` rotated word boxes whose enclosing rectangles
    /// are pairwise separated, fully inside the image.
    pub fn random(seed: u64, image_size: (f64, f64), n_words: usize, noise: f64, clutter: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (iw, ih) = image_size;
        let short = iw.min(ih);
        let mut gts: Vec<CanonicalQuad> = Vec::with_capacity(n_words);
        let mut tries = 0;
        while gts.len() < n_words && tries < 200 * n_words.max(1) {
            tries += 1;
            let h = rng.random_range(0.03..0.08) * short;
            let w = h * rng.random_range(1.5..6.0);
            let deg = rng.random_range(-40.0..40.0);
            let q = rotated_rect(rng.random_range(0.0..iw), rng.random_range(0.0..ih), w, h, deg);
            let r = min_bounding_hrect(&q);
            if r.xmin() < 0.0 || r.ymin() < 0.0 || r.xmax() > iw || r.ymax() > ih {
                continue;
            }
            if gts.iter().any(|g| rects_overlap(&g.enclosing, &r, 4.0)) {
                continue;
            }
            if let Ok(c) = canonicalize_quad(q.v) {
                gts.push(c);
            }
        }
        Self { image_size, gts, noise, clutter, seed }
    }

    pub fn gt_entries(&self) -> Vec<GroundTruthEntry> {
        self.gts
            .iter()
            .map(|g| GroundTruthEntry { quad: *g, transcription: "synth".into(), dont_care: false })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneDiagnostics {
    /// Ground truths no default box was assigned to.
    pub unmatched_gts: Vec<usize>,
    /// Ground truths whose best default-box IOU is at or below the threshold;
    /// they are matched only through the argmax rule.
    pub weak_gts: Vec<usize>,
    pub positives: usize,
    pub num_defaults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub predictions: Vec<Prediction>,
    pub diagnostics: SceneDiagnostics,
}

impl SynthOutput {
    pub fn det_entries(&self) -> Vec<DetectionEntry> {
        self.predictions
            .iter()
            .map(|p| DetectionEntry { quad: p.quad, score: p.score })
            .collect()
    }
}

pub fn synth_predictions(
    scene: &SyntheticScene,
    anchors: &AnchorConfig,
    match_thr: f64,
) -> Result<SynthOutput> {
    let (iw, ih) = scene.image_size;
    if !(iw > 0.0 && ih > 0.0) {
        return Err(Error::Config("scene image size must be positive".into()));
    }
    if !(scene.noise >= 0.0 && scene.noise.is_finite()) {
        return Err(Error::Config("noise must be a non-negative number".into()));
    }
    let defaults: Vec<DefaultBox> = anchors.generate()?.iter().map(|d| d.to_pixels(iw, ih)).collect();
    let assignment = match_defaults(&defaults, &scene.gts, match_thr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x5eed_5eed_5eed_5eed);
    let jitter = Normal::new(0.0, scene.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut predictions = Vec::new();
    let mut best = vec![0.0f64; scene.gts.len()];
    for (i, j) in assignment.pairs() {
        let d = &defaults[i];
        best[j] = best[j].max(assignment.best_iou[i]);
        let off = encode_quad(&scene.gts[j], &d.rect)?;
        let (_, mut quad) = decode_quad(&off, &d.rect)?;
        if scene.noise > 0.0 {
            for p in quad.v.iter_mut() {
                p.x += jitter.sample(&mut rng);
                p.y += jitter.sample(&mut rng);
            }
        }
        let score = 1.0 - rng.random_range(0.0..TRUE_SCORE_SPREAD);
        predictions.push(Prediction::new(quad, score, anchors.input_size)?);
    }
    for _ in 0..scene.clutter {
        let r = rng.random_range(0.02..0.1) * iw.min(ih);
        let (cx, cy) = (rng.random_range(0.0..iw), rng.random_range(0.0..ih));
        let q = random_convex_quad(&mut rng, cx, cy, r);
        let score = rng.random_range(0.0..CLUTTER_MAX_SCORE);
        predictions.push(Prediction::new(q, score, anchors.input_size)?);
    }

    let counts = assignment.matches_per_gt();
    let diagnostics = SceneDiagnostics {
        unmatched_gts: (0..scene.gts.len()).filter(|&j| counts[j] == 0).collect(),
        weak_gts: (0..scene.gts.len()).filter(|&j| counts[j] > 0 && best[j] <= match_thr).collect(),
        positives: assignment.positive_count(),
        num_defaults: defaults.len(),
    };
    Ok(SynthOutput { predictions, diagnostics })
}
