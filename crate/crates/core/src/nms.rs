//! Multi-scale merging and cascaded non-maximum suppression.
//!
//! The cascade runs a cheap greedy NMS on enclosing rectangles at a high
//! threshold, then exact polygon NMS at a lower threshold on the survivors.
//! Stage one may remove a box whose polygon overlap with the winner is
//! small; that is the intended approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_hrect_or_zero, min_bounding_hrect, HRect, PreparedQuad, Quad};

pub const DEFAULT_HRECT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_QUAD_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub quad: Quad,
    pub enclosing: HRect,
    pub score: f64,
    /// Input size the prediction was produced at.
    pub source_scale: u32,
}

impl Prediction {
    pub fn new(quad: Quad, score: f64, source_scale: u32) -> Result<Self> {
        if !quad.is_finite() {
            return Err(Error::NonFinite);
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Config(format!("score {score} is outside [0, 1]")));
        }
        Ok(Self {
            quad,
            enclosing: min_bounding_hrect(&quad),
            score,
            source_scale,
        })
    }
}

/// Maps predictions from a `from` image size into a `to` image size.
pub fn rescale_predictions(
    preds: &[Prediction],
    from_size: (f64, f64),
    to_size: (f64, f64),
) -> Result<Vec<Prediction>> {
    let sizes = [from_size.0, from_size.1, to_size.0, to_size.1];
    if !sizes.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::Config("image sizes must be positive".into()));
    }
    let (sx, sy) = (to_size.0 / from_size.0, to_size.1 / from_size.1);
    Ok(preds
        .iter()
        .map(|p| {
            let quad = p.quad.scale(sx, sy);
            Prediction {
                quad,
                enclosing: min_bounding_hrect(&quad),
                ..*p
            }
        })
        .collect())
}

/// Rescales each scale's predictions to `to_size` and concatenates them.
pub fn merge_scales(
    per_scale: &[(Vec<Prediction>, (f64, f64))],
    to_size: (f64, f64),
) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (preds, from) in per_scale {
        out.extend(rescale_predictions(preds, *from, to_size)?);
    }
    Ok(out)
}

/// Indices ordered by descending score, ties by ascending index.
fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let s: Vec<f64> = scores.collect();
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    idx
}

struct Bounds {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Bounds {
    fn of(r: &HRect) -> Self {
        Self { x0: r.xmin(), y0: r.ymin(), x1: r.xmax(), y1: r.ymax() }
    }

    fn disjoint(&self, o: &Bounds) -> bool {
        self.x1 <= o.x0 || o.x1 <= self.x0 || self.y1 <= o.y0 || o.y1 <= self.y0
    }
}

fn greedy<F>(order: &[usize], n: usize, mut suppresses: F) -> Vec<usize>
where
    F: FnMut(usize, usize) -> bool,
{
    let mut removed = vec![false; n];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !removed[j] && suppresses(i, j) {
                removed[j] = true;
            }
        }
    }
    keep
}

/// Greedy NMS on enclosing rectangles. Returns kept indices in descending
/// score order.
pub fn nms_hrect(preds: &[Prediction], thr: f64) -> Vec<usize> {
    let order = score_order(preds.iter().map(|p| p.score));
    let bounds: Vec<Bounds> = preds.iter().map(|p| Bounds::of(&p.enclosing)).collect();
    greedy(&order, preds.len(), |i, j| {
        !bounds[i].disjoint(&bounds[j])
            && iou_hrect_or_zero(&preds[i].enclosing, &preds[j].enclosing) > thr
    })
}

/// Greedy NMS on quadrilaterals (see [`crate::geometry::iou_quad_lenient`]).
pub fn nms_quad(preds: &[Prediction], thr: f64) -> Vec<usize> {
    let order = score_order(preds.iter().map(|p| p.score));
    let prepared: Vec<PreparedQuad> = preds.iter().map(|p| PreparedQuad::new(&p.quad)).collect();
    greedy(&order, preds.len(), |i, j| {
        prepared[i].iou(&prepared[j]).unwrap_or(0.0) > thr
    })
}

/// Rectangle NMS at `thr1`, then quad NMS at `thr2` on the survivors.
pub fn cascaded_nms(preds: &[Prediction], thr1: f64, thr2: f64) -> Vec<usize> {
    let stage1 = nms_hrect(preds, thr1);
    let survivors: Vec<Prediction> = stage1.iter().map(|&i| preds[i]).collect();
    nms_quad(&survivors, thr2)
        .into_iter()
        .map(|k| stage1[k])
        .collect()
}
