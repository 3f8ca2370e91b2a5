//! ICDAR-style detection evaluation: file parsing, one-to-one greedy
//! matching at an IOU threshold, and precision / recall / F-measure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{canonicalize_quad, CanonicalQuad};
use crate::error::{Error, Result};
use crate::geometry::{PreparedQuad, Quad};

pub const DONT_CARE: &str = "###";
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub quad: CanonicalQuad,
    pub transcription: String,
    pub dont_care: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub quad: Quad,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedDetections {
    pub entries: Vec<DetectionEntry>,
    pub warnings: Vec<ParseWarning>,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_coords(fields: &[&str], line: usize) -> Result<[f64; 8]> {
    let mut c = [0.0; 8];
    for (k, f) in fields.iter().take(8).enumerate() {
        let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("coordinate {} ({:?}) is not a number", k + 1, f.trim()),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { line, message: format!("coordinate {} is not finite", k + 1) });
        }
        c[k] = v;
    }
    Ok(c)
}

/// Parses `x1,y1,...,x4,y4,transcription` lines. The transcription may
/// itself contain commas; `###` marks a don't-care region.
pub fn parse_gt_file(text: &str) -> Result<Vec<GroundTruthEntry>> {
    let mut out = Vec::new();
    for (line, l) in lines(text) {
        let fields: Vec<&str> = l.splitn(9, ',').collect();
        if fields.len() < 9 {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 coordinates and a transcription, found {} fields", fields.len()),
            });
        }
        let coords = parse_coords(&fields, line)?;
        let quad = canonicalize_quad(Quad::from_coords(coords).v).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let transcription = fields[8].to_string();
        out.push(GroundTruthEntry {
            quad,
            dont_care: transcription == DONT_CARE,
            transcription,
        });
    }
    Ok(out)
}

/// Parses `x1,y1,...,x4,y4[,score]` lines. A missing score reads as 1;
/// scores outside `[0, 1]` are clamped and reported as warnings.
pub fn parse_det_file(text: &str) -> Result<ParsedDetections> {
    let mut out = ParsedDetections::default();
    for (line, l) in lines(text) {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 8 && fields.len() != 9 {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 coordinates and an optional score, found {} fields", fields.len()),
            });
        }
        let coords = parse_coords(&fields, line)?;
        let mut score = match fields.get(8) {
            None => 1.0,
            Some(s) => s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("score {:?} is not a number", s.trim()),
            })?,
        };
        if score.is_nan() {
            return Err(Error::Parse { line, message: "score is NaN".into() });
        }
        if !(0.0..=1.0).contains(&score) {
            let clamped = score.clamp(0.0, 1.0);
            out.warnings.push(ParseWarning {
                line,
                message: format!("score {score} clamped to {clamped}"),
            });
            score = clamped;
        }
        out.entries.push(DetectionEntry { quad: Quad::from_coords(coords), score });
    }
    Ok(out)
}

/// Serializes detections in the format [`parse_det_file`] reads.
pub fn format_det_file(dets: &[DetectionEntry]) -> String {
    let mut s = String::new();
    for d in dets {
        let c = d.quad.coords();
        let coords: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        s.push_str(&coords.join(","));
        s.push(',');
        s.push_str(&d.score.to_string());
        s.push('\n');
    }
    s
}

/// Serializes ground truths in the format [`parse_gt_file`] reads.
pub fn format_gt_file(gts: &[GroundTruthEntry]) -> String {
    let mut s = String::new();
    for g in gts {
        let coords: Vec<String> = g.quad.quad.coords().iter().map(|v| v.to_string()).collect();
        s.push_str(&coords.join(","));
        s.push(',');
        s.push_str(&g.transcription);
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(detection index, ground-truth index)` hits.
    pub pairs: Vec<(usize, usize)>,
    /// Detections absorbed by don't-care regions.
    pub discarded: Vec<usize>,
}

/// Greedy one-to-one matching in descending score order.
///
/// Each detection claims the unclaimed regular ground truth it overlaps
/// most if that IOU is strictly above `iou_thr`. A detection whose best
/// overlap is a don't-care region above the threshold is discarded instead.
pub fn match_detections(
    dets: &[DetectionEntry],
    gts: &[GroundTruthEntry],
    iou_thr: f64,
) -> MatchOutcome {
    let gt_prep: Vec<PreparedQuad> = gts.iter().map(|g| PreparedQuad::new(&g.quad.quad)).collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut claimed = vec![false; gts.len()];
    let mut out = MatchOutcome::default();
    for i in order {
        let dp = PreparedQuad::new(&dets[i].quad);
        let mut best_care: Option<(usize, f64)> = None;
        let mut best_dc = 0.0f64;
        for (j, g) in gts.iter().enumerate() {
            let iou = dp.iou(&gt_prep[j]).unwrap_or(0.0);
            if g.dont_care {
                best_dc = best_dc.max(iou);
            } else if !claimed[j] && best_care.is_none_or(|(_, b)| iou > b) {
                best_care = Some((j, iou));
            }
        }
        let care_iou = best_care.map_or(0.0, |(_, v)| v);
        if best_dc > iou_thr && best_dc > care_iou {
            out.discarded.push(i);
        } else if let Some((j, _)) = best_care.filter(|&(_, v)| v > iou_thr) {
            claimed[j] = true;
            out.tp += 1;
            out.pairs.push((i, j));
        } else {
            out.fp += 1;
        }
    }
    out.fn_ = gts
        .iter()
        .zip(&claimed)
        .filter(|(g, c)| !g.dont_care && !**c)
        .count();
    out
}

/// F-measure from precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `(P, R, F)` with empty denominators read as a perfect score.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    (p, r, f_measure(p, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl EvalResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f_measure) = prf(tp, fp, fn_);
        Self { tp, fp, fn_, precision, recall, f_measure }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub stem: String,
    #[serde(flatten)]
    pub result: EvalResult,
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub iou_threshold: f64,
    pub total: EvalResult,
    pub images: Vec<ImageResult>,
    pub warnings: Vec<String>,
}

impl DatasetReport {
    /// Plain-text table: one row per image and a micro-averaged total.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
            "image", "tp", "fp", "fn", "precision", "recall", "f"
        );
        let row = |s: &mut String, name: &str, r: &EvalResult| {
            s.push_str(&format!(
                "{:<24} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
                name, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f_measure
            ));
        };
        for im in &self.images {
            row(&mut s, &im.stem, &im.result);
        }
        row(&mut s, "TOTAL", &self.total);
        s
    }
}

/// One image's detections and ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCase {
    pub stem: String,
    pub dets: Vec<DetectionEntry>,
    pub gts: Vec<GroundTruthEntry>,
}

/// Micro-averaged evaluation over in-memory images, in parallel.
pub fn evaluate_images(images: &[ImageCase], iou_thr: f64) -> Result<DatasetReport> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::Config(format!("IOU threshold {iou_thr} is outside (0, 1]")));
    }
    let per: Vec<ImageResult> = images
        .par_iter()
        .map(|im| {
            let m = match_detections(&im.dets, &im.gts, iou_thr);
            ImageResult {
                stem: im.stem.clone(),
                result: EvalResult::from_counts(m.tp, m.fp, m.fn_),
                discarded: m.discarded.len(),
            }
        })
        .collect();
    let (tp, fp, fn_) = per.iter().fold((0, 0, 0), |acc, r| {
        (acc.0 + r.result.tp, acc.1 + r.result.fp, acc.2 + r.result.fn_)
    });
    Ok(DatasetReport {
        iou_threshold: iou_thr,
        total: EvalResult::from_counts(tp, fp, fn_),
        images: per,
        warnings: Vec::new(),
    })
}

fn stems(dir: &Path, prefix: &str) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_prefix(prefix).and_then(|n| n.strip_suffix(".txt")) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|_| Error::Io(format!("{}: not valid UTF-8", path.display())))
}

fn with_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Loads `res_<stem>.txt` / `gt_<stem>.txt` pairs. A ground-truth file
/// without detections counts as an image with no detections; a detection
/// file without ground truth is an error.
pub fn load_dataset(det_dir: &Path, gt_dir: &Path) -> Result<(Vec<ImageCase>, Vec<String>)> {
    let dets = stems(det_dir, "res_")?;
    let gts = stems(gt_dir, "gt_")?;
    let missing: Vec<&str> = dets.keys().filter(|k| !gts.contains_key(*k)).map(String::as_str).collect();
    if !missing.is_empty() {
        return Err(Error::Dataset(format!(
            "no ground truth for detection files: {}",
            missing.join(", ")
        )));
    }
    let loaded: Vec<Result<(ImageCase, Vec<String>)>> = gts
        .par_iter()
        .map(|(stem, gt_path)| {
            let gts = with_file(gt_path, parse_gt_file(&read_text(gt_path)?))?;
            let (dets, warnings) = match dets.get(stem) {
                Some(p) => {
                    let parsed = with_file(p, parse_det_file(&read_text(p)?))?;
                    let w = parsed
                        .warnings
                        .iter()
                        .map(|w| format!("{}:{}: {}", p.display(), w.line, w.message))
                        .collect();
                    (parsed.entries, w)
                }
                None => (Vec::new(), Vec::new()),
            };
            Ok((ImageCase { stem: stem.clone(), dets, gts }, warnings))
        })
        .collect();
    let mut images = Vec::with_capacity(loaded.len());
    let mut warnings = Vec::new();
    for r in loaded {
        let (im, w) = r?;
        images.push(im);
        warnings.extend(w);
    }
    Ok((images, warnings))
}

pub fn evaluate_dataset(det_dir: &Path, gt_dir: &Path, iou_thr: f64) -> Result<DatasetReport> {
    let (images, warnings) = load_dataset(det_dir, gt_dir)?;
    let mut report = evaluate_images(&images, iou_thr)?;
    report.warnings = warnings;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HRect;

    fn rect_gt(x0: f64, y0: f64, x1: f64, y1: f64, text: &str) -> GroundTruthEntry {
        GroundTruthEntry {
            quad: CanonicalQuad::from_quad(&HRect::from_bounds(x0, y0, x1, y1).corners()).unwrap(),
            transcription: text.into(),
            dont_care: text == DONT_CARE,
        }
    }

    fn rect_det(x0: f64, y0: f64, x1: f64, y1: f64, score: f64) -> DetectionEntry {
        DetectionEntry { quad: HRect::from_bounds(x0, y0, x1, y1).corners(), score }
    }

    #[test]
    fn parse_gt_examples() {
        let g = parse_gt_file("0,0,10,0,10,5,0,5,word").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].transcription, "word");
        assert!(!g[0].dont_care);
        assert_eq!(g[0].quad.quad, Quad::from_coords([0., 0., 10., 0., 10., 5., 0., 5.]));

        let g = parse_gt_file("\u{feff}377,117,463,117,465,130,378,130,Genaxis Theatre\r\n374,155,409,155,409,170,374,170,###\n").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].transcription, "Genaxis Theatre");
        assert!(g[1].dont_care);

        let g = parse_gt_file("0,0,10,0,10,5,0,5,a,b").unwrap();
        assert_eq!(g[0].transcription, "a,b");

        assert!(matches!(parse_gt_file("a,0,10,0,10,5,0,5,w"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_gt_file("0,0,10,0,10,5,0,5,w\n0,0,10,0,10,5,0"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn parse_det_examples() {
        let d = parse_det_file("0,0,10,0,10,5,0,5,0.9").unwrap();
        assert_eq!(d.entries[0].score, 0.9);
        assert!(d.warnings.is_empty());
        assert!(parse_det_file("").unwrap().entries.is_empty());
        let d = parse_det_file("0,0,10,0,10,5,0,5,1.5").unwrap();
        assert_eq!(d.entries[0].score, 1.0);
        assert_eq!(d.warnings.len(), 1);
        assert_eq!(d.warnings[0].line, 1);
        let d = parse_det_file("0,0,10,0,10,5,0,5").unwrap();
        assert_eq!(d.entries[0].score, 1.0);
        assert!(parse_det_file("0,0,10,0,10,5,0,5,x").is_err());
    }

    #[test]
    fn det_file_roundtrip() {
        let dets = vec![rect_det(0.5, 1.25, 10., 20., 0.75), rect_det(3., 4., 5., 6., 0.1)];
        let back = parse_det_file(&format_det_file(&dets)).unwrap();
        assert_eq!(back.entries, dets);
    }

    #[test]
    fn perfect_and_threshold_cases() {
        let gts = vec![rect_gt(0., 0., 10., 10., "a"), rect_gt(20., 0., 30., 10., "b")];
        let dets: Vec<DetectionEntry> = gts
            .iter()
            .map(|g| DetectionEntry { quad: g.quad.quad, score: 0.9 })
            .collect();
        let m = match_detections(&dets, &gts, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));

        // IOU 0.4: [0,10]² vs [0,10]×[?]; take a det sharing 4/10 of the area
        let g = vec![rect_gt(0., 0., 10., 10., "a")];
        let d = vec![rect_det(0., 0., 10., 4., 0.9)];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }

    #[test]
    fn iou_must_be_strictly_above_threshold() {
        let g = vec![rect_gt(0., 0., 10., 10., "a")];
        let d = vec![rect_det(0., 0., 10., 5., 0.9)];
        assert_eq!(match_detections(&d, &g, 0.5).tp, 0);
        assert_eq!(match_detections(&d, &g, 0.49).tp, 1);
    }

    #[test]
    fn dont_care_absorbs_detection() {
        let g = vec![rect_gt(0., 0., 10., 10., DONT_CARE), rect_gt(50., 50., 60., 60., "x")];
        let d = vec![rect_det(0., 0., 10., 10., 0.9)];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 1));
        assert_eq!(m.discarded, vec![0]);
    }

    #[test]
    fn one_to_one_by_score() {
        let g = vec![rect_gt(0., 0., 10., 10., "a")];
        let d = vec![rect_det(0., 0., 10., 9., 0.5), rect_det(0., 0., 10., 10., 0.9)];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m.pairs, vec![(1, 0)]);
        assert_eq!((m.tp, m.fp), (1, 1));
    }

    #[test]
    fn prf_examples() {
        assert_eq!(prf(50, 50, 50), (0.5, 0.5, 0.5));
        assert_eq!(prf(0, 0, 0), (1.0, 1.0, 1.0));
        assert_eq!(prf(0, 3, 0), (0.0, 1.0, 0.0));
        assert_eq!(prf(0, 3, 4).2, 0.0);
        for k in 1..20 {
            let base = prf(7, 3, 5);
            let scaled = prf(7 * k, 3 * k, 5 * k);
            assert!((base.0 - scaled.0).abs() < 1e-15);
            assert!((base.2 - scaled.2).abs() < 1e-15);
        }
    }

    #[test]
    fn f_is_bounded_by_means() {
        for tp in 0..15 {
            for fp in 0..15 {
                for fn_ in 0..15 {
                    let (p, r, f) = prf(tp, fp, fn_);
                    assert!(f <= (p * r).sqrt() + 1e-15);
                    assert!(f <= 0.5 * (p + r) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn evaluate_images_two_images_one_missed() {
        let g = vec![rect_gt(0., 0., 10., 10., "a")];
        let images = vec![
            ImageCase { stem: "1".into(), dets: vec![rect_det(0., 0., 10., 10., 0.9)], gts: g.clone() },
            ImageCase { stem: "2".into(), dets: vec![], gts: g },
        ];
        let r = evaluate_images(&images, 0.5).unwrap();
        assert_eq!(r.total.recall, 0.5);
        assert_eq!(r.total.precision, 1.0);
        assert!(r.to_table().contains("TOTAL"));
    }

    #[test]
    fn dataset_directories() {
        let det = tempfile::tempdir().unwrap();
        let gt = tempfile::tempdir().unwrap();
        fs::write(gt.path().join("gt_img_1.txt"), "0,0,10,0,10,10,0,10,a\n").unwrap();
        fs::write(gt.path().join("gt_img_2.txt"), "0,0,10,0,10,10,0,10,a\n").unwrap();
        fs::write(det.path().join("res_img_1.txt"), "0,0,10,0,10,10,0,10,0.9\n").unwrap();
        let r = evaluate_dataset(det.path(), gt.path(), 0.5).unwrap();
        assert_eq!(r.images.len(), 2);
        assert_eq!(r.total.recall, 0.5);

        fs::write(det.path().join("res_img_2.txt"), "0,0,10,0,10,10,0,10,0.9\n").unwrap();
        let r = evaluate_dataset(det.path(), gt.path(), 0.5).unwrap();
        assert_eq!(r.total.f_measure, 1.0);

        fs::write(det.path().join("res_img_9.txt"), "").unwrap();
        match evaluate_dataset(det.path(), gt.path(), 0.5) {
            Err(Error::Dataset(msg)) => assert!(msg.contains("img_9")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
