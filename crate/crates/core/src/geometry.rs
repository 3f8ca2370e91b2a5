//! Convex quadrilateral and rectangle geometry.
//!
//! Coordinates are image coordinates with `y` pointing down. A polygon is
//! *clockwise* when it winds clockwise as drawn on screen, which under the
//! standard shoelace sum `Σ (xᵢ·yᵢ₊₁ − xᵢ₊₁·yᵢ)` with `y` down gives a
//! **positive** signed area (see [`signed_area`]). The default-box corner
//! layout `(TL, TR, BR, BL)` is clockwise in this sense.
//!
//! Quadrilateral IOU is exact: the intersection is computed by
//! Sutherland–Hodgman clipping of one convex polygon against the other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for cross-product sign tests, scaled by the squared
/// bounding-box diagonal of the polygon under test.
pub const CONVEXITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `(a − o) × (b − o)`. Positive when `o → a → b` turns clockwise on screen.
#[inline]
pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Four ordered vertices of an oriented box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub v: [Point; 4],
}

impl Quad {
    pub const fn new(v: [Point; 4]) -> Self {
        Self { v }
    }

    /// Builds a quad from `[x1, y1, x2, y2, x3, y3, x4, y4]`.
    pub fn from_coords(c: [f64; 8]) -> Self {
        Self {
            v: [
                Point::new(c[0], c[1]),
                Point::new(c[2], c[3]),
                Point::new(c[4], c[5]),
                Point::new(c[6], c[7]),
            ],
        }
    }

    pub fn coords(&self) -> [f64; 8] {
        let v = &self.v;
        [
            v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(Point::is_finite)
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.v)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_clockwise(&self) -> bool {
        self.signed_area() > 0.0
    }

    /// Convex and non-self-intersecting, up to [`CONVEXITY_EPS`].
    /// Degenerate (zero-area) quads count as convex.
    pub fn is_convex(&self) -> bool {
        is_convex(&self.v)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Quad {
        Quad::new(self.v.map(|p| Point::new(p.x + dx, p.y + dy)))
    }

    pub fn scale(&self, sx: f64, sy: f64) -> Quad {
        Quad::new(self.v.map(|p| Point::new(p.x * sx, p.y * sy)))
    }

    /// Same polygon, opposite winding, first vertex kept.
    pub fn reversed(&self) -> Quad {
        let v = &self.v;
        Quad::new([v[0], v[3], v[2], v[1]])
    }

    /// Cyclic shift so that vertex `k` comes first.
    pub fn rotated(&self, k: usize) -> Quad {
        let v = &self.v;
        Quad::new([v[k % 4], v[(k + 1) % 4], v[(k + 2) % 4], v[(k + 3) % 4]])
    }

    fn check_strict(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        if !self.is_convex() {
            return Err(Error::NonConvex);
        }
        Ok(())
    }
}

/// Center-format axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HRect {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl HRect {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_bounds(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            cx: 0.5 * (xmin + xmax),
            cy: 0.5 * (ymin + ymax),
            w: xmax - xmin,
            h: ymax - ymin,
        }
    }

    pub fn xmin(&self) -> f64 {
        self.cx - 0.5 * self.w
    }
    pub fn xmax(&self) -> f64 {
        self.cx + 0.5 * self.w
    }
    pub fn ymin(&self) -> f64 {
        self.cy - 0.5 * self.h
    }
    pub fn ymax(&self) -> f64 {
        self.cy + 0.5 * self.h
    }

    pub fn area(&self) -> f64 {
        (self.xmax() - self.xmin()) * (self.ymax() - self.ymin())
    }

    pub fn is_finite(&self) -> bool {
        self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Corners in `(TL, TR, BR, BL)` order.
    pub fn corners(&self) -> Quad {
        let (x0, x1, y0, y1) = (self.xmin(), self.xmax(), self.ymin(), self.ymax());
        Quad::new([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin() && p.x <= self.xmax() && p.y >= self.ymin() && p.y <= self.ymax()
    }

    pub fn intersection_area(&self, other: &HRect) -> f64 {
        let ix = self.xmax().min(other.xmax()) - self.xmin().max(other.xmin());
        let iy = self.ymax().min(other.ymax()) - self.ymin().max(other.ymin());
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }
}

/// Rotated rectangle given by its top edge `(x1, y1) → (x2, y2)` and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RRect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub h: f64,
}

impl RRect {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64, h: f64) -> Self {
        Self { x1, y1, x2, y2, h }
    }
}

/// An ordered vertex list, typically the result of clipping.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }
}

impl From<Quad> for Polygon {
    fn from(q: Quad) -> Self {
        Polygon::new(q.v.to_vec())
    }
}

/// Signed shoelace area; positive for screen-clockwise winding with `y` down.
pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

pub fn shoelace_area(p: &Polygon) -> Result<f64> {
    if p.vertices.len() < 3 {
        return Err(Error::EmptyPolygon(p.vertices.len()));
    }
    if !p.vertices.iter().all(Point::is_finite) {
        return Err(Error::NonFinite);
    }
    Ok(signed_area(&p.vertices).abs())
}

fn bounds(pts: &[Point]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        b.0 = b.0.min(p.x);
        b.1 = b.1.min(p.y);
        b.2 = b.2.max(p.x);
        b.3 = b.3.max(p.y);
    }
    b
}

fn is_convex(pts: &[Point]) -> bool {
    let n = pts.len();
    let (x0, y0, x1, y1) = bounds(pts);
    let diag2 = (x1 - x0).powi(2) + (y1 - y0).powi(2);
    let eps = CONVEXITY_EPS * diag2;
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        let c = cross(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
        if c > eps {
            pos = true;
        } else if c < -eps {
            neg = true;
        }
    }
    // With four vertices, a consistent turn direction at every corner rules
    // out the bow-tie (its turns alternate) and any winding number above one.
    !(pos && neg)
}

/// Sutherland–Hodgman: clip `subject` against the convex polygon `clip`.
/// Either winding is accepted for both inputs.
fn sutherland_hodgman(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let orient = signed_area(clip);
    if orient == 0.0 || subject.len() < 3 {
        return Vec::new();
    }
    let s = orient.signum();
    let mut output: Vec<Point> = subject.to_vec();
    let mut input: Vec<Point> = Vec::with_capacity(8);
    let m = clip.len();
    for j in 0..m {
        if output.is_empty() {
            break;
        }
        std::mem::swap(&mut input, &mut output);
        output.clear();
        let a = clip[j];
        let b = clip[(j + 1) % m];
        let n = input.len();
        for i in 0..n {
            let p = input[i];
            let q = input[(i + 1) % n];
            let cp = s * cross(a, b, p);
            let cq = s * cross(a, b, q);
            if cp >= 0.0 {
                output.push(p);
                if cq < 0.0 {
                    output.push(segment_line(p, q, cp, cq));
                }
            } else if cq >= 0.0 {
                output.push(segment_line(p, q, cp, cq));
            }
        }
    }
    output
}

#[inline]
fn segment_line(p: Point, q: Point, cp: f64, cq: f64) -> Point {
    let t = cp / (cp - cq);
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Intersection polygon of two convex quads.
pub fn clip_convex(subject: &Quad, clip: &Quad) -> Result<Polygon> {
    subject.check_strict()?;
    clip.check_strict()?;
    Ok(Polygon::new(sutherland_hodgman(&subject.v, &clip.v)))
}

/// Convex hull (Andrew's monotone chain), screen-clockwise, collinear points
/// dropped. Returns fewer than three points for degenerate input.
pub fn convex_hull(pts: &[Point]) -> Vec<Point> {
    let mut p: Vec<Point> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &pt in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0
            {
                hull.pop();
            }
            hull.push(pt);
        }
        hull.pop();
    }
    hull
}

/// A quad reduced to its convex hull with cached area and bounds, the unit
/// of work for repeated IOU evaluation.
#[derive(Debug, Clone)]
pub struct PreparedQuad {
    hull: Vec<Point>,
    area: f64,
    bounds: (f64, f64, f64, f64),
}

impl PreparedQuad {
    pub fn new(q: &Quad) -> Self {
        let hull = convex_hull(&q.v);
        let area = if hull.len() >= 3 {
            signed_area(&hull).abs()
        } else {
            0.0
        };
        Self {
            bounds: bounds(&q.v),
            hull,
            area,
        }
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    fn bounds_disjoint(&self, other: &PreparedQuad) -> bool {
        let (a, b) = (self.bounds, other.bounds);
        a.2 <= b.0 || b.2 <= a.0 || a.3 <= b.1 || b.3 <= a.1
    }

    fn order_key(&self) -> impl Iterator<Item = u64> + '_ {
        self.hull
            .iter()
            .flat_map(|p| [p.x.to_bits(), p.y.to_bits()])
    }

    /// Intersection area; exactly symmetric in its arguments.
    pub fn intersection_area(&self, other: &PreparedQuad) -> f64 {
        if self.area == 0.0 || other.area == 0.0 || self.bounds_disjoint(other) {
            return 0.0;
        }
        if self.hull == other.hull {
            return self.area;
        }
        // Clip in a fixed argument order so that f(a, b) == f(b, a) bit for bit.
        let (s, c) = if self.order_key().le(other.order_key()) {
            (self, other)
        } else {
            (other, self)
        };
        let poly = sutherland_hodgman(&s.hull, &c.hull);
        let inter = signed_area(&poly).abs();
        inter.min(self.area).min(other.area)
    }

    /// IOU; `None` when both areas are zero.
    pub fn iou(&self, other: &PreparedQuad) -> Option<f64> {
        if self.area == 0.0 && other.area == 0.0 {
            return None;
        }
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        Some((inter / union).clamp(0.0, 1.0))
    }
}

pub fn intersection_area(a: &Quad, b: &Quad) -> Result<f64> {
    a.check_strict()?;
    b.check_strict()?;
    Ok(PreparedQuad::new(a).intersection_area(&PreparedQuad::new(b)))
}

pub fn iou_quad(a: &Quad, b: &Quad) -> Result<f64> {
    a.check_strict()?;
    b.check_strict()?;
    PreparedQuad::new(a)
        .iou(&PreparedQuad::new(b))
        .ok_or(Error::UndefinedIou)
}

/// IOU that never fails: non-convex quads are replaced by their convex hull
/// and a zero-area pair scores 0. Identical to [`iou_quad`] on convex input.
/// Used by NMS and evaluation, where inputs come from models or annotators.
pub fn iou_quad_lenient(a: &Quad, b: &Quad) -> f64 {
    PreparedQuad::new(a)
        .iou(&PreparedQuad::new(b))
        .unwrap_or(0.0)
}

pub fn iou_hrect(a: &HRect, b: &HRect) -> Result<f64> {
    let (aa, ba) = (a.area(), b.area());
    if aa == 0.0 && ba == 0.0 {
        return Err(Error::UndefinedIou);
    }
    let inter = a.intersection_area(b).min(aa).min(ba);
    Ok((inter / (aa + ba - inter)).clamp(0.0, 1.0))
}

/// [`iou_hrect`] with the undefined case mapped to 0.
pub(crate) fn iou_hrect_or_zero(a: &HRect, b: &HRect) -> f64 {
    iou_hrect(a, b).unwrap_or(0.0)
}

pub fn min_bounding_hrect(q: &Quad) -> HRect {
    let (x0, y0, x1, y1) = bounds(&q.v);
    let mut r = HRect::from_bounds(x0, y0, x1, y1);
    // Center/size storage can round an edge inward by an ulp.
    while r.xmin() > x0 || r.xmax() < x1 {
        r.w = r.w.next_up();
    }
    while r.ymin() > y0 || r.ymax() < y1 {
        r.h = r.h.next_up();
    }
    r
}

/// Corners of a rotated rectangle, clockwise, starting at `(x1, y1)`.
pub fn rrect_to_quad(r: &RRect) -> Result<Quad> {
    if ![r.x1, r.y1, r.x2, r.y2, r.h].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (ex, ey) = (r.x2 - r.x1, r.y2 - r.y1);
    let len = ex.hypot(ey);
    if len == 0.0 {
        return Err(Error::Degenerate("rotated rectangle has a zero-length top edge"));
    }
    if r.h <= 0.0 {
        return Err(Error::Degenerate("rotated rectangle height must be positive"));
    }
    let (ux, uy) = (ex / len, ey / len);
    let (nx, ny) = (-uy * r.h, ux * r.h);
    Ok(Quad::new([
        Point::new(r.x1, r.y1),
        Point::new(r.x2, r.y2),
        Point::new(r.x2 + nx, r.y2 + ny),
        Point::new(r.x1 + nx, r.y1 + ny),
    ]))
}
