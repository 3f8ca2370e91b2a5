//! Ground-truth canonicalization and box/offset conversion.
//!
//! A default box `b0 = (x0, y0, w0, h0)` doubles as the quad
//! `(TL, TR, BR, BL)` and as the rotated rectangle `(TL, TR, h0)`. Offsets
//! are relative to it: centers and vertices by `w0`/`h0`, sizes in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, min_bounding_hrect, HRect, Point, Quad, RRect, CONVEXITY_EPS};

/// A ground-truth quad in the vertex order used for regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalQuad {
    pub quad: Quad,
    pub enclosing: HRect,
    /// Cyclic shift applied to the clockwise-from-top vertex order.
    pub shift: u8,
}

impl CanonicalQuad {
    pub fn from_quad(q: &Quad) -> Result<Self> {
        canonicalize_quad(q.v)
    }
}

/// Offsets for the quadrilateral head: 4 enclosing-rect terms plus 8 vertex terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadOffsets {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub dq: [f64; 8],
}

impl QuadOffsets {
    pub fn to_array(&self) -> [f64; 12] {
        let mut a = [0.0; 12];
        a[..4].copy_from_slice(&[self.dx, self.dy, self.dw, self.dh]);
        a[4..].copy_from_slice(&self.dq);
        a
    }

    pub fn from_array(a: [f64; 12]) -> Self {
        let mut dq = [0.0; 8];
        dq.copy_from_slice(&a[4..]);
        Self {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
            dq,
        }
    }
}

/// Offsets for the rotated-rectangle head: 4 enclosing-rect terms plus
/// `(Δx₁, Δy₁, Δx₂, Δy₂, Δh)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RRectOffsets {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub dr: [f64; 5],
}

impl RRectOffsets {
    pub fn to_array(&self) -> [f64; 9] {
        let mut a = [0.0; 9];
        a[..4].copy_from_slice(&[self.dx, self.dy, self.dw, self.dh]);
        a[4..].copy_from_slice(&self.dr);
        a
    }
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, p: Point, d: f64| {
        d == 0.0
            && p.x >= a.x.min(b.x)
            && p.x <= a.x.max(b.x)
            && p.y >= a.y.min(b.y)
            && p.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Distance sums closer than this (relative to `w + h`) are ties.
pub const SHIFT_TIE_EPS: f64 = 1e-12;

/// Sum of distances from the enclosing-rect corners `b` to `q` shifted by `delta`.
pub fn shift_distance(b: &Quad, q: &Quad, delta: usize) -> f64 {
    (0..4).map(|i| b.v[i].distance(&q.v[(i + delta) % 4])).sum()
}

/// Orders four vertices for regression.
///
/// The input may start at any vertex and wind either way, but its cyclic
/// order must describe a simple polygon. The vertices are made clockwise and
/// rotated to start at the topmost point (leftmost among equals); the result
/// is then shifted by the `Δ ∈ 0..4` that minimizes the summed distance to
/// the enclosing rectangle's `(TL, TR, BR, BL)` corners. Ties, up to
/// [`SHIFT_TIE_EPS`], go to the smallest shift.
pub fn canonicalize_quad(vertices: [Point; 4]) -> Result<CanonicalQuad> {
    if !vertices.iter().all(Point::is_finite) {
        return Err(Error::InvalidQuad("non-finite vertex"));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            if vertices[i] == vertices[j] {
                return Err(Error::InvalidQuad("repeated vertex"));
            }
        }
    }
    let v = vertices;
    if segments_intersect(v[0], v[1], v[2], v[3]) || segments_intersect(v[1], v[2], v[3], v[0]) {
        return Err(Error::InvalidQuad("self-intersecting"));
    }
    let mut q = Quad::new(v);
    let r = min_bounding_hrect(&q);
    let area = q.signed_area();
    if area.abs() <= CONVEXITY_EPS * (r.w * r.w + r.h * r.h) {
        return Err(Error::InvalidQuad("zero area"));
    }
    if area < 0.0 {
        q = q.reversed();
    }
    let top = (0..4)
        .min_by(|&a, &b| {
            q.v[a]
                .y
                .total_cmp(&q.v[b].y)
                .then(q.v[a].x.total_cmp(&q.v[b].x))
        })
        .unwrap_or(0);
    let q_top = q.rotated(top);
    let corners = r.corners();
    let sums: [f64; 4] = std::array::from_fn(|d| shift_distance(&corners, &q_top, d));
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    // Symmetric shapes tie exactly in theory; summation order breaks the
    // tie by an ulp, so near-equal sums count as equal.
    let tol = SHIFT_TIE_EPS * (r.w + r.h);
    let delta = (0..4).find(|&d| sums[d] <= min + tol).unwrap_or(0);
    Ok(CanonicalQuad {
        quad: q_top.rotated(delta),
        enclosing: r,
        shift: delta as u8,
    })
}

/// Rotated rectangle through the first two vertices; the height is the mean
/// distance of the last two vertices from the line through the first two.
pub fn quad_to_rrect(c: &CanonicalQuad) -> Result<RRect> {
    let [v1, v2, v3, v4] = c.quad.v;
    let len = v1.distance(&v2);
    if len == 0.0 {
        return Err(Error::Degenerate("first two vertices coincide"));
    }
    let h = 0.5 * (cross(v1, v2, v3).abs() + cross(v1, v2, v4).abs()) / len;
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Degenerate("rotated rectangle height is zero"));
    }
    Ok(RRect::new(v1.x, v1.y, v2.x, v2.y, h))
}

fn check_anchor(d: &HRect) -> Result<()> {
    if !d.is_finite() {
        return Err(Error::NonFinite);
    }
    if d.w <= 0.0 || d.h <= 0.0 {
        return Err(Error::DegenerateAnchor);
    }
    Ok(())
}

fn decode_rect(dx: f64, dy: f64, dw: f64, dh: f64, d: &HRect) -> HRect {
    HRect::new(
        d.cx + d.w * dx,
        d.cy + d.h * dy,
        d.w * dw.exp(),
        d.h * dh.exp(),
    )
}

fn encode_rect(gt: &HRect, d: &HRect) -> Result<(f64, f64, f64, f64)> {
    if !gt.is_finite() {
        return Err(Error::NonFinite);
    }
    if gt.w <= 0.0 || gt.h <= 0.0 {
        return Err(Error::InvalidTarget("enclosing rectangle must have positive extents"));
    }
    Ok((
        (gt.cx - d.cx) / d.w,
        (gt.cy - d.cy) / d.h,
        (gt.w / d.w).ln(),
        (gt.h / d.h).ln(),
    ))
}

/// Decodes quad-head offsets against the default box `d`.
pub fn decode_quad(off: &QuadOffsets, d: &HRect) -> Result<(HRect, Quad)> {
    if !off.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let rect = decode_rect(off.dx, off.dy, off.dw, off.dh, d);
    let base = d.corners();
    let mut v = base.v;
    for (n, p) in v.iter_mut().enumerate() {
        p.x += d.w * off.dq[2 * n];
        p.y += d.h * off.dq[2 * n + 1];
    }
    let quad = Quad::new(v);
    if !rect.is_finite() || !quad.is_finite() {
        return Err(Error::Overflow);
    }
    Ok((rect, quad))
}

pub fn encode_quad(gt: &CanonicalQuad, d: &HRect) -> Result<QuadOffsets> {
    check_anchor(d)?;
    let (dx, dy, dw, dh) = encode_rect(&gt.enclosing, d)?;
    let base = d.corners();
    let mut dq = [0.0; 8];
    for n in 0..4 {
        dq[2 * n] = (gt.quad.v[n].x - base.v[n].x) / d.w;
        dq[2 * n + 1] = (gt.quad.v[n].y - base.v[n].y) / d.h;
    }
    Ok(QuadOffsets { dx, dy, dw, dh, dq })
}

/// Decodes rotated-rectangle offsets against the default box `d`.
pub fn decode_rrect(off: &RRectOffsets, d: &HRect) -> Result<(HRect, RRect)> {
    if !off.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let rect = decode_rect(off.dx, off.dy, off.dw, off.dh, d);
    let [a, b, ..] = d.corners().v;
    let r = RRect::new(
        a.x + d.w * off.dr[0],
        a.y + d.h * off.dr[1],
        b.x + d.w * off.dr[2],
        b.y + d.h * off.dr[3],
        d.h * off.dr[4].exp(),
    );
    if !rect.is_finite() || ![r.x1, r.y1, r.x2, r.y2, r.h].iter().all(|v| v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok((rect, r))
}

pub fn encode_rrect(gt: &RRect, enclosing: &HRect, d: &HRect) -> Result<RRectOffsets> {
    check_anchor(d)?;
    let (dx, dy, dw, dh) = encode_rect(enclosing, d)?;
    if !(gt.h > 0.0 && gt.h.is_finite()) {
        return Err(Error::InvalidTarget("rotated rectangle height must be positive"));
    }
    let [a, b, ..] = d.corners().v;
    Ok(RRectOffsets {
        dx,
        dy,
        dw,
        dh,
        dr: [
            (gt.x1 - a.x) / d.w,
            (gt.y1 - a.y) / d.h,
            (gt.x2 - b.x) / d.w,
            (gt.y2 - b.y) / d.h,
            (gt.h / d.h).ln(),
        ],
    })
}
