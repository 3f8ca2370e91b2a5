//! Python bindings: `import pyquadbox`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use quadbox::anchors::AnchorConfig;
use quadbox::augment::{apply_crop, sample_crop as sample_crop_core, AugmentConfig};
use quadbox::codec::{self, CanonicalQuad as CoreCanonical};
use quadbox::eval::{match_detections, DetectionEntry, EvalResult, GroundTruthEntry, DONT_CARE};
use quadbox::geometry::{self, Point};
use quadbox::nms::Prediction;

fn err(e: quadbox::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

/// Convex quadrilateral given as `[x1, y1, ..., x4, y4]`.
#[pyclass(name = "Quad", module = "pyquadbox", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyQuad(geometry::Quad);

#[pymethods]
impl PyQuad {
    #[new]
    fn new(coords: [f64; 8]) -> Self {
        Self(geometry::Quad::from_coords(coords))
    }

    fn coords(&self) -> [f64; 8] {
        self.0.coords()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn is_convex(&self) -> bool {
        self.0.is_convex()
    }

    fn is_clockwise(&self) -> bool {
        self.0.is_clockwise()
    }

    /// Exact IOU; raises on non-convex or degenerate input.
    fn iou(&self, other: &PyQuad) -> PyResult<f64> {
        geometry::iou_quad(&self.0, &other.0).map_err(err)
    }

    fn bounding_rect(&self) -> PyHRect {
        PyHRect(geometry::min_bounding_hrect(&self.0))
    }

    fn __repr__(&self) -> String {
        format!("Quad({:?})", self.0.coords())
    }
}

/// Axis-aligned rectangle `(cx, cy, w, h)`.
#[pyclass(name = "HRect", module = "pyquadbox", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyHRect(geometry::HRect);

#[pymethods]
impl PyHRect {
    #[new]
    fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self(geometry::HRect::new(cx, cy, w, h))
    }

    #[staticmethod]
    fn from_bounds(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self(geometry::HRect::from_bounds(xmin, ymin, xmax, ymax))
    }

    #[getter]
    fn cx(&self) -> f64 {
        self.0.cx
    }
    #[getter]
    fn cy(&self) -> f64 {
        self.0.cy
    }
    #[getter]
    fn w(&self) -> f64 {
        self.0.w
    }
    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.0.xmin(), self.0.ymin(), self.0.xmax(), self.0.ymax())
    }

    fn iou(&self, other: &PyHRect) -> PyResult<f64> {
        geometry::iou_hrect(&self.0, &other.0).map_err(err)
    }

    fn corners(&self) -> PyQuad {
        PyQuad(self.0.corners())
    }

    fn __repr__(&self) -> String {
        let r = self.0;
        format!("HRect(cx={}, cy={}, w={}, h={})", r.cx, r.cy, r.w, r.h)
    }
}

/// Ground-truth quad in regression vertex order.
#[pyclass(name = "CanonicalQuad", module = "pyquadbox", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyCanonical(CoreCanonical);

#[pymethods]
impl PyCanonical {
    #[getter]
    fn quad(&self) -> PyQuad {
        PyQuad(self.0.quad)
    }
    #[getter]
    fn enclosing(&self) -> PyHRect {
        PyHRect(self.0.enclosing)
    }
    #[getter]
    fn shift(&self) -> u8 {
        self.0.shift
    }

    fn __repr__(&self) -> String {
        format!("CanonicalQuad({:?}, shift={})", self.0.quad.coords(), self.0.shift)
    }
}

#[pyfunction]
fn canonicalize(coords: [f64; 8]) -> PyResult<PyCanonical> {
    codec::canonicalize_quad(geometry::Quad::from_coords(coords).v)
        .map(PyCanonical)
        .map_err(err)
}

/// Clips `subject` by `clip`; returns the intersection polygon's vertices.
#[pyfunction]
fn clip_convex(subject: &PyQuad, clip: &PyQuad) -> PyResult<Vec<(f64, f64)>> {
    let p = geometry::clip_convex(&subject.0, &clip.0).map_err(err)?;
    Ok(p.vertices.iter().map(|v| (v.x, v.y)).collect())
}

#[pyfunction]
fn polygon_area(points: Vec<(f64, f64)>) -> PyResult<f64> {
    let vertices: Vec<Point> = points.into_iter().map(|(x, y)| Point::new(x, y)).collect();
    geometry::shoelace_area(&geometry::Polygon { vertices }).map_err(err)
}

#[pyfunction]
fn encode_quad(gt: &PyCanonical, anchor: &PyHRect) -> PyResult<[f64; 12]> {
    codec::encode_quad(&gt.0, &anchor.0).map(|o| o.to_array()).map_err(err)
}

#[pyfunction]
fn decode_quad(offsets: [f64; 12], anchor: &PyHRect) -> PyResult<(PyHRect, PyQuad)> {
    let (r, q) = codec::decode_quad(&codec::QuadOffsets::from_array(offsets), &anchor.0).map_err(err)?;
    Ok((PyHRect(r), PyQuad(q)))
}

/// Rotated-rectangle offsets (9 values) for a canonical ground truth.
#[pyfunction]
fn encode_rrect(gt: &PyCanonical, anchor: &PyHRect) -> PyResult<[f64; 9]> {
    let rr = codec::quad_to_rrect(&gt.0).map_err(err)?;
    codec::encode_rrect(&rr, &gt.0.enclosing, &anchor.0)
        .map(|o| o.to_array())
        .map_err(err)
}

/// `(x1, y1, x2, y2, h)`.
type RRectTuple = (f64, f64, f64, f64, f64);

/// Returns the decoded enclosing rect and the rotated rectangle.
#[pyfunction]
fn decode_rrect(offsets: [f64; 9], anchor: &PyHRect) -> PyResult<(PyHRect, RRectTuple)> {
    let o = offsets;
    let off = codec::RRectOffsets { dx: o[0], dy: o[1], dw: o[2], dh: o[3], dr: [o[4], o[5], o[6], o[7], o[8]] };
    let (r, rr) = codec::decode_rrect(&off, &anchor.0).map_err(err)?;
    Ok((PyHRect(r), (rr.x1, rr.y1, rr.x2, rr.y2, rr.h)))
}

/// Default boxes for a preset input size, in unit coordinates or scaled to
/// `image_size`.
#[pyfunction]
#[pyo3(signature = (input_size = 384, image_size = None, vertical_offsets = true))]
fn default_boxes(input_size: u32, image_size: Option<(f64, f64)>, vertical_offsets: bool) -> PyResult<Vec<PyHRect>> {
    let cfg = AnchorConfig { input_size, vertical_offsets, ..Default::default() };
    let boxes = cfg.generate().map_err(err)?;
    Ok(boxes
        .iter()
        .map(|b| match image_size {
            Some((w, h)) => PyHRect(b.to_pixels(w, h).rect),
            None => PyHRect(b.rect),
        })
        .collect())
}

fn predictions(quads: Vec<PyRef<'_, PyQuad>>, scores: Vec<f64>) -> PyResult<Vec<Prediction>> {
    if quads.len() != scores.len() {
        return Err(err(quadbox::Error::Shape { expected: quads.len(), actual: scores.len() }));
    }
    quads
        .iter()
        .zip(scores)
        .map(|(q, s)| Prediction::new(q.0, s, 0).map_err(err))
        .collect()
}

/// Indices kept by rectangle NMS then quad NMS, highest score first.
#[pyfunction]
#[pyo3(signature = (quads, scores, thr1 = 0.5, thr2 = 0.2))]
fn cascaded_nms(quads: Vec<PyRef<'_, PyQuad>>, scores: Vec<f64>, thr1: f64, thr2: f64) -> PyResult<Vec<usize>> {
    Ok(quadbox::cascaded_nms(&predictions(quads, scores)?, thr1, thr2))
}

#[pyfunction]
#[pyo3(signature = (quads, scores, thr = 0.2))]
fn nms_quad(quads: Vec<PyRef<'_, PyQuad>>, scores: Vec<f64>, thr: f64) -> PyResult<Vec<usize>> {
    Ok(quadbox::nms_quad(&predictions(quads, scores)?, thr))
}

/// Matches one image's detections against its ground truth; transcriptions
/// equal to `"###"` are don't-care regions.
#[pyfunction]
#[pyo3(signature = (dets, scores, gts, transcriptions, iou_thr = 0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    dets: Vec<PyRef<'py, PyQuad>>,
    scores: Vec<f64>,
    gts: Vec<PyRef<'py, PyQuad>>,
    transcriptions: Vec<String>,
    iou_thr: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if dets.len() != scores.len() || gts.len() != transcriptions.len() {
        return Err(PyValueError::new_err("shape: length mismatch"));
    }
    let d: Vec<DetectionEntry> = dets.iter().zip(&scores).map(|(q, &score)| DetectionEntry { quad: q.0, score }).collect();
    let g = gts
        .iter()
        .zip(transcriptions)
        .map(|(q, t)| {
            Ok(GroundTruthEntry {
                quad: CoreCanonical::from_quad(&q.0).map_err(err)?,
                dont_care: t == DONT_CARE,
                transcription: t,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let m = match_detections(&d, &g, iou_thr);
    let r = EvalResult::from_counts(m.tp, m.fp, m.fn_);
    let out = PyDict::new(py);
    out.set_item("tp", r.tp)?;
    out.set_item("fp", r.fp)?;
    out.set_item("fn", r.fn_)?;
    out.set_item("precision", r.precision)?;
    out.set_item("recall", r.recall)?;
    out.set_item("f_measure", r.f_measure)?;
    out.set_item("pairs", m.pairs)?;
    out.set_item("discarded", m.discarded)?;
    Ok(out)
}

#[pyfunction]
fn f_measure(precision: f64, recall: f64) -> f64 {
    quadbox::eval::f_measure(precision, recall)
}

#[pyfunction]
fn combined_score(detection: f64, recognition: f64) -> f64 {
    quadbox::fusion::combined_score(detection, recognition)
}

/// Samples one constrained crop; returns `None` when every draw is rejected,
/// else `(crop, transformed_gts)`.
#[pyfunction]
#[pyo3(signature = (image_size, gts, seed = 0))]
fn sample_crop(
    image_size: (f64, f64),
    gts: Vec<PyRef<'_, PyCanonical>>,
    seed: u64,
) -> PyResult<Option<(PyHRect, Vec<PyCanonical>)>> {
    let cfg = AugmentConfig::default();
    let g: Vec<CoreCanonical> = gts.iter().map(|c| c.0).collect();
    let Some(crop) = sample_crop_core(image_size, &g, &cfg, seed).map_err(err)? else {
        return Ok(None);
    };
    let kept = apply_crop(&crop, &g, cfg.output_size).map_err(err)?;
    Ok(Some((PyHRect(crop.rect), kept.into_iter().map(PyCanonical).collect())))
}

#[pymodule]
fn pyquadbox(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuad>()?;
    m.add_class::<PyHRect>()?;
    m.add_class::<PyCanonical>()?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(clip_convex, m)?)?;
    m.add_function(wrap_pyfunction!(polygon_area, m)?)?;
    m.add_function(wrap_pyfunction!(encode_quad, m)?)?;
    m.add_function(wrap_pyfunction!(decode_quad, m)?)?;
    m.add_function(wrap_pyfunction!(encode_rrect, m)?)?;
    m.add_function(wrap_pyfunction!(decode_rrect, m)?)?;
    m.add_function(wrap_pyfunction!(default_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(cascaded_nms, m)?)?;
    m.add_function(wrap_pyfunction!(nms_quad, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(f_measure, m)?)?;
    m.add_function(wrap_pyfunction!(combined_score, m)?)?;
    m.add_function(wrap_pyfunction!(sample_crop, m)?)?;
    Ok(())
}
