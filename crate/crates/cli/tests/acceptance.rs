//! Acceptance suite: one test per criterion, each printing a single
//! `[PASS]` / `[FAIL]` line. Run with `-- --nocapture --test-threads 1` to
//! see the lines in order.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use quadbox::anchors::{generate_default_boxes, StageSpec, TEXT_ASPECT_RATIOS};
use quadbox::augment::{crop_satisfies, jaccard_coverage, sample_crop, AugmentConfig};
use quadbox::bench::{dense_predictions, run_benchmark, BenchConfig};
use quadbox::codec::{canonicalize_quad, SHIFT_TIE_EPS, decode_quad, decode_rrect, encode_quad, encode_rrect, quad_to_rrect};
use quadbox::eval::f_measure;
use quadbox::fusion::combined_score;
use quadbox::geometry::{iou_hrect, iou_quad, iou_quad_lenient, min_bounding_hrect, HRect, Point, Quad};
use quadbox::matching::{combine_loss, conf_loss, smooth_l1, Label};
use quadbox::nms::{cascaded_nms, Prediction};
use quadbox::synth::{random_convex_quad, rotated_rect};

fn report(n: u32, ok: bool, elapsed: Duration, budget: Option<Duration>, detail: &str) {
    let in_time = budget.is_none_or(|b| elapsed < b);
    let pass = ok && in_time;
    let budget_note = budget.map_or(String::new(), |b| format!(" (budget {:?})", b));
    println!(
        "[{}] criterion {n}: {detail}; {:.3?}{budget_note}",
        if pass { "PASS" } else { "FAIL" },
        elapsed
    );
    assert!(ok, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its time budget: {elapsed:?}");
}

#[test]
fn criterion_01_f_measure_identity() {
    let t = Instant::now();
    let f = f_measure(0.872, 0.767);
    let el = t.elapsed();
    report(
        1,
        (f - 0.817).abs() <= 0.0005,
        el,
        Some(Duration::from_millis(1)),
        &format!("F(P=0.872, R=0.767) = {f:.6}, target 0.817 ± 0.0005"),
    );
}

fn inside_convex(q: &Quad, p: Point) -> bool {
    let orient = q.signed_area().signum();
    (0..4).all(|i| {
        let a = q.v[i];
        let b = q.v[(i + 1) % 4];
        ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) * orient >= 0.0
    })
}

/// Jittered-grid Monte-Carlo IOU with `side²` samples over the joint bounds.
fn monte_carlo_iou(a: &Quad, b: &Quad, side: usize, rng: &mut ChaCha8Rng) -> f64 {
    let xs = a.v.iter().chain(&b.v).map(|p| p.x);
    let ys = a.v.iter().chain(&b.v).map(|p| p.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (dx, dy) = ((x1 - x0) / side as f64, (y1 - y0) / side as f64);
    let (mut both, mut either) = (0u64, 0u64);
    for i in 0..side {
        for j in 0..side {
            let p = Point::new(
                x0 + (i as f64 + rng.random::<f64>()) * dx,
                y0 + (j as f64 + rng.random::<f64>()) * dy,
            );
            let (ia, ib) = (inside_convex(a, p), inside_convex(b, p));
            both += (ia && ib) as u64;
            either += (ia || ib) as u64;
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

#[test]
fn criterion_02_quad_iou_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(Quad, Quad, u64)> = (0..500)
        .map(|k| {
            let r = rng.random_range(5.0..50.0);
            let a = random_convex_quad(&mut rng, 0.0, 0.0, r);
            let (ox, oy) = (rng.random_range(-1.2..1.2) * r, rng.random_range(-1.2..1.2) * r);
            let rb = r * rng.random_range(0.5..1.5);
            let b = random_convex_quad(&mut rng, ox, oy, rb);
            (a, b, k)
        })
        .collect();
    let worst = pairs
        .par_iter()
        .map(|(a, b, k)| {
            let exact = iou_quad(a, b).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(1000 + k);
            (exact - monte_carlo_iou(a, b, 1000, &mut r)).abs()
        })
        .reduce(|| 0.0, f64::max);
    report(
        2,
        worst < 5e-3,
        t.elapsed(),
        Some(Duration::from_secs(60)),
        &format!("max |iou − MC(10⁶)| over 500 pairs = {worst:.2e}"),
    );
}

#[test]
fn criterion_03_codec_roundtrip() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_q, mut worst_r) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let (cx, cy) = (rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
        let r = rng.random_range(3.0..150.0);
        let gt = canonicalize_quad(random_convex_quad(&mut rng, cx, cy, r).v).unwrap();
        let d = HRect::new(
            cx + rng.random_range(-1.0..1.0) * r,
            cy + rng.random_range(-1.0..1.0) * r,
            r * rng.random_range(0.2..3.0),
            r * rng.random_range(0.2..3.0),
        );

        let (rect, quad) = decode_quad(&encode_quad(&gt, &d).unwrap(), &d).unwrap();
        for (p, g) in quad.v.iter().zip(gt.quad.v) {
            worst_q = worst_q.max((p.x - g.x).abs()).max((p.y - g.y).abs());
        }
        for (a, b) in [(rect.cx, gt.enclosing.cx), (rect.cy, gt.enclosing.cy), (rect.w, gt.enclosing.w), (rect.h, gt.enclosing.h)] {
            worst_q = worst_q.max((a - b).abs());
        }

        let rr = quad_to_rrect(&gt).unwrap();
        let (rect, back) = decode_rrect(&encode_rrect(&rr, &gt.enclosing, &d).unwrap(), &d).unwrap();
        for (a, b) in [
            (back.x1, rr.x1),
            (back.y1, rr.y1),
            (back.x2, rr.x2),
            (back.y2, rr.y2),
            (back.h, rr.h),
            (rect.cx, gt.enclosing.cx),
            (rect.cy, gt.enclosing.cy),
            (rect.w, gt.enclosing.w),
            (rect.h, gt.enclosing.h),
        ] {
            worst_r = worst_r.max((a - b).abs());
        }
    }
    report(
        3,
        worst_q < 1e-9 && worst_r < 1e-9,
        t.elapsed(),
        Some(Duration::from_secs(5)),
        &format!("max error quad {worst_q:.2e}, rotated rect {worst_r:.2e} over 10k pairs each"),
    );
}

/// Simple quads: convex, star-shaped non-convex, axis-aligned, and diamonds,
/// with a random starting vertex and winding.
fn random_simple_quad(rng: &mut ChaCha8Rng) -> [Point; 4] {
    let (cx, cy) = (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    let mut v: Vec<Point> = match rng.random_range(0..4) {
        0 => {
            let r = rng.random_range(1.0..50.0);
            random_convex_quad(rng, cx, cy, r).v.to_vec()
        }
        1 => {
            let mut ang: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            ang.sort_by(f64::total_cmp);
            ang.iter()
                .map(|a| {
                    let r = rng.random_range(1.0..50.0);
                    Point::new(cx + r * a.cos(), cy + r * a.sin())
                })
                .collect()
        }
        2 => {
            let (w, h) = (rng.random_range(1.0..50.0), rng.random_range(1.0..50.0));
            HRect::new(cx, cy, w, h).corners().v.to_vec()
        }
        _ => {
            let (w, h) = (rng.random_range(1.0..50.0), rng.random_range(1.0..50.0));
            vec![Point::new(cx, cy - h), Point::new(cx + w, cy), Point::new(cx, cy + h), Point::new(cx - w, cy)]
        }
    };
    if rng.random_bool(0.5) {
        v.reverse();
    }
    v.rotate_left(rng.random_range(0..4));
    [v[0], v[1], v[2], v[3]]
}

/// Independent reading of the ordering rule: clockwise (positive shoelace
/// in y-down coordinates), topmost-then-leftmost first, then the smallest
/// cyclic shift minimizing the distance sum to (TL, TR, BR, BL).
fn oracle_order(v: [Point; 4]) -> ([Point; 4], usize, f64, [f64; 4]) {
    let area: f64 = (0..4).map(|i| v[i].x * v[(i + 1) % 4].y - v[(i + 1) % 4].x * v[i].y).sum();
    let mut cw = v.to_vec();
    if area < 0.0 {
        cw.reverse();
    }
    let top = (0..4)
        .min_by(|&a, &b| cw[a].y.partial_cmp(&cw[b].y).unwrap().then(cw[a].x.partial_cmp(&cw[b].x).unwrap()))
        .unwrap();
    cw.rotate_left(top);
    let x0 = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let corners = [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
    let sums: [f64; 4] = std::array::from_fn(|d| {
        (0..4).map(|i| (corners[i].x - cw[(i + d) % 4].x).hypot(corners[i].y - cw[(i + d) % 4].y)).sum()
    });
    let best = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    // Mirror-symmetric shapes tie up to summation rounding.
    let tol = SHIFT_TIE_EPS * ((x1 - x0) + (y1 - y0));
    let delta = (0..4).find(|&d| sums[d] <= best + tol).unwrap();
    let out = std::array::from_fn(|i| cw[(i + delta) % 4]);
    (out, delta, best, sums)
}

#[test]
fn criterion_04_canonicalization_minimality() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut ties, mut bad) = (0usize, 0usize, Vec::new());
    while checked < 10_000 {
        let v = random_simple_quad(&mut rng);
        let Ok(c) = canonicalize_quad(v) else { continue };
        checked += 1;
        let (order, delta, best, sums) = oracle_order(v);
        let got: f64 = {
            let b = min_bounding_hrect(&c.quad).corners();
            (0..4).map(|i| b.v[i].distance(&c.quad.v[i])).sum()
        };
        if sums.iter().filter(|&&s| s <= best + SHIFT_TIE_EPS * best).count() > 1 {
            ties += 1;
        }
        let again = canonicalize_quad(v).unwrap();
        let ok = c.quad.v == order && c.shift as usize == delta && (got - best).abs() <= 1e-9 * best.max(1.0) && again == c;
        if !ok {
            bad.push((v, c.shift, delta));
        }
    }
    report(
        4,
        bad.is_empty(),
        t.elapsed(),
        Some(Duration::from_secs(5)),
        &format!("{} of {checked} quads disagree with exhaustive shift enumeration ({ties} ties)", bad.len()),
    );
}

/// Two passes of the textbook greedy NMS: each candidate in score order is
/// kept unless it overlaps an already kept box above the threshold.
fn reference_cascade(preds: &[Prediction], thr1: f64, thr2: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    let mut stage1: Vec<usize> = Vec::new();
    for &i in &order {
        let r = min_bounding_hrect(&preds[i].quad);
        let hit = stage1.iter().any(|&k| {
            iou_hrect(&min_bounding_hrect(&preds[k].quad), &r).unwrap_or(0.0) > thr1
        });
        if !hit {
            stage1.push(i);
        }
    }
    let mut stage2: Vec<usize> = Vec::new();
    for &i in &stage1 {
        if !stage2.iter().any(|&k| iou_quad_lenient(&preds[k].quad, &preds[i].quad) > thr2) {
            stage2.push(i);
        }
    }
    stage2
}

fn random_scene(rng: &mut ChaCha8Rng) -> Vec<Prediction> {
    let n = rng.random_range(1..=200);
    let mut preds: Vec<Prediction> = Vec::with_capacity(n);
    let centers: Vec<(f64, f64)> = (0..rng.random_range(1..=20))
        .map(|_| (rng.random_range(0.0..300.0), rng.random_range(0.0..300.0)))
        .collect();
    while preds.len() < n {
        let q = if !preds.is_empty() && rng.random_bool(0.05) {
            preds[rng.random_range(0..preds.len())].quad
        } else {
            let (cx, cy) = centers[rng.random_range(0..centers.len())];
            let h = rng.random_range(4.0..30.0);
            rotated_rect(
                cx + rng.random_range(-10.0..10.0),
                cy + rng.random_range(-10.0..10.0),
                h * rng.random_range(1.0..5.0),
                h,
                rng.random_range(-60.0..60.0),
            )
        };
        // Coarse scores produce plenty of exact ties.
        let score = (rng.random_range(0..20) as f64) / 19.0;
        preds.push(Prediction::new(q, score, 384).unwrap());
    }
    preds
}

#[test]
fn criterion_05_cascade_matches_reference() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scenes: Vec<(Vec<Prediction>, f64, f64)> = (0..1000)
        .map(|k| {
            let (t1, t2) = if k % 4 == 0 { (0.5, 0.2) } else { (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)) };
            (random_scene(&mut rng), t1, t2)
        })
        .collect();
    let mismatches = scenes
        .par_iter()
        .filter(|(p, t1, t2)| {
            let mut a = cascaded_nms(p, *t1, *t2);
            let mut b = reference_cascade(p, *t1, *t2);
            a.sort_unstable();
            b.sort_unstable();
            a != b
        })
        .count();
    report(
        5,
        mismatches == 0,
        t.elapsed(),
        Some(Duration::from_secs(30)),
        &format!("{mismatches} of 1000 scenes differ from the naive two-stage reference"),
    );
}

#[test]
fn criterion_06_cascade_speed_informational() {
    let t = Instant::now();
    let cfg = BenchConfig { n_boxes: 20_000, repeats: 5, ..Default::default() };
    let r = run_benchmark(&cfg).unwrap();
    assert_eq!(dense_predictions(10, 2.0, 1).len(), 10);
    let faster = r.cascade.median_ms < r.direct.median_ms;
    println!(
        "[{}] criterion 6 (informational, non-gating): direct median {:.1} ms, cascade median {:.1} ms, speedup {:.2}x; {:.3?}",
        if faster { "PASS" } else { "FAIL" },
        r.direct.median_ms,
        r.cascade.median_ms,
        r.speedup,
        t.elapsed()
    );
    assert!(r.equal_with_stage1_disabled, "thr1 = 1 must reproduce direct quad NMS");
}

#[test]
fn criterion_07_augmentation_constraints() {
    let t = Instant::now();
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut accepted, mut violations, mut seed) = (0usize, 0usize, 0u64);
    while accepted < 10_000 {
        let size: (f64, f64) = (rng.random_range(200.0..1500.0), rng.random_range(200.0..1500.0));
        let gts: Vec<_> = (0..rng.random_range(1..6))
            .filter_map(|_| {
                let s = size.0.min(size.1);
                let q = rotated_rect(
                    rng.random_range(0.0..size.0),
                    rng.random_range(0.0..size.1),
                    rng.random_range(0.02..0.5) * s,
                    rng.random_range(0.02..0.2) * s,
                    rng.random_range(-45.0..45.0),
                );
                canonicalize_quad(q.v).ok()
            })
            .collect();
        seed += 1;
        if let Some(c) = sample_crop(size, &gts, &cfg, seed).unwrap() {
            accepted += 1;
            let rects: Vec<HRect> = gts.iter().map(|g| g.enclosing).collect();
            if !crop_satisfies(&c, &rects) {
                violations += 1;
            }
        }
    }
    let mut bad_pairs = 0usize;
    for _ in 0..1_000_000 {
        let mut r = || {
            let (x, y) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            HRect::from_bounds(x, y, x + rng.random_range(0.01..60.0), y + rng.random_range(0.01..60.0))
        };
        let (b, g) = (r(), r());
        let (j, c) = jaccard_coverage(&b, &g).unwrap();
        if c < j {
            bad_pairs += 1;
        }
    }
    report(
        7,
        violations == 0 && bad_pairs == 0,
        t.elapsed(),
        Some(Duration::from_secs(10)),
        &format!("{violations} of {accepted} crops fail their constraint; C < J on {bad_pairs} of 10⁶ pairs"),
    );
}

#[test]
fn criterion_08_anchor_layout() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for cfg_idx in 0..20 {
        let stages: Vec<StageSpec> = (0..rng.random_range(1..5))
            .map(|_| {
                let scale = rng.random_range(0.05..0.9);
                StageSpec {
                    map_w: rng.random_range(1..20),
                    map_h: rng.random_range(1..20),
                    scale,
                    next_scale: scale + rng.random_range(0.0..0.3),
                }
            })
            .collect();
        let ratios: Vec<f64> = TEXT_ASPECT_RATIOS.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
        let ratios = if ratios.is_empty() { vec![1.0] } else { ratios };
        let offsets = rng.random_bool(0.7);
        let boxes = generate_default_boxes(&stages, &ratios, offsets).unwrap();
        let per_cell = (ratios.len() + ratios.contains(&1.0) as usize) * if offsets { 2 } else { 1 };
        let expected: usize = stages.iter().map(|s| (s.map_w * s.map_h) as usize * per_cell).sum();
        if boxes.len() != expected {
            failures.push(format!("config {cfg_idx}: {} boxes, expected {expected}", boxes.len()));
        }
        if offsets {
            for pair in boxes.chunks(2) {
                let (a, b) = (pair[0], pair[1]);
                let dy = 0.5 / stages[a.stage].map_h as f64;
                let same = a.rect.cx == b.rect.cx && a.rect.w == b.rect.w && a.rect.h == b.rect.h;
                if !same || !b.vertical_offset || a.vertical_offset || (b.rect.cy - a.rect.cy - dy).abs() > 1e-15 {
                    failures.push(format!("config {cfg_idx}: twin mismatch"));
                    break;
                }
            }
        }
    }
    report(
        8,
        failures.is_empty(),
        t.elapsed(),
        Some(Duration::from_secs(1)),
        &format!("20 configs, {} failures {:?}", failures.len(), failures),
    );
}

#[test]
fn criterion_09_fusion_properties() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut sym, mut diag, mut bounds, mut deriv) = (0, 0, 0, 0);
    let h = 1e-5;
    for _ in 0..1000 {
        let a: f64 = rng.random_range(-3.0..3.0);
        let b: f64 = rng.random_range(-3.0..3.0);
        let s = combined_score(a, b);
        sym += (s != combined_score(b, a)) as usize;
        diag += ((combined_score(a, a) - a.exp()).abs() > 1e-12 * a.exp().max(1.0)) as usize;
        let (lo, hi) = (a.min(b).exp(), a.max(b).exp());
        bounds += !(s >= lo * (1.0 - 1e-15) && s <= hi * (1.0 + 1e-15)) as usize;
        let den = (-a).exp() + (-b).exp();
        let analytic = [2.0 * (-a).exp() / (den * den), 2.0 * (-b).exp() / (den * den)];
        let numeric = [
            (combined_score(a + h, b) - combined_score(a - h, b)) / (2.0 * h),
            (combined_score(a, b + h) - combined_score(a, b - h)) / (2.0 * h),
        ];
        for k in 0..2 {
            deriv += ((numeric[k] - analytic[k]).abs() / analytic[k].abs() >= 1e-4) as usize;
        }
    }
    report(
        9,
        sym + diag + bounds + deriv == 0,
        t.elapsed(),
        Some(Duration::from_secs(1)),
        &format!("violations on 1k points: symmetry {sym}, S(s,s)=e^s {diag}, bounds {bounds}, derivative {deriv}"),
    );
}

fn quadbox(args: &[&str]) -> serde_json::Value {
    let out = Command::new(env!("CARGO_BIN_EXE_quadbox")).args(args).output().unwrap();
    assert!(out.status.success(), "quadbox {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn pipeline(dir: &Path, seed: &str, noise: &str, iou: &[&str]) -> Vec<serde_json::Value> {
    let (scenes, nms) = (dir.join("scenes"), dir.join("nms"));
    let (s, n) = (scenes.to_str().unwrap(), nms.to_str().unwrap());
    quadbox(&[
        "synth", "--seed", seed, "--scenes", "50", "--image-size", "512x512", "--noise", noise, "--clutter", "0",
        "--out", s,
    ]);
    quadbox(&["nms", "--dets", s, "--out", n]);
    iou.iter()
        .map(|thr| quadbox(&["eval", "--iou-thr", thr, "--dets", n, "--gts", s])["total"].clone())
        .collect()
}

#[test]
fn criterion_10_synthetic_pipeline() {
    let t = Instant::now();
    let clean_dir = tempfile::tempdir().unwrap();
    let clean = &pipeline(clean_dir.path(), "10", "0", &["0.5"])[0];
    let perfect = ["precision", "recall", "f_measure"].iter().all(|k| clean[k] == 1.0);
    let noisy_dir = tempfile::tempdir().unwrap();
    let noisy = pipeline(noisy_dir.path(), "11", "2", &["0.5", "0.7"]);
    let (f5, f7) = (noisy[0]["f_measure"].as_f64().unwrap(), noisy[1]["f_measure"].as_f64().unwrap());
    report(
        10,
        perfect && f7 <= f5,
        t.elapsed(),
        Some(Duration::from_secs(60)),
        &format!(
            "clean P/R/F = {}/{}/{}; σ=2 px F@0.5 = {f5:.4}, F@0.7 = {f7:.4}",
            clean["precision"], clean["recall"], clean["f_measure"]
        ),
    );
}

#[test]
fn criterion_11_loss_spot_checks() {
    let t = Instant::now();
    let l = combine_loss(1.0, 5.0, 1, 0.2);
    let s = smooth_l1(0.5);
    let c = conf_loss([0.3, 0.3], Label::Positive);
    let el = t.elapsed();
    report(
        11,
        (l - 2.0).abs() < 1e-12 && (s - 0.125).abs() < 1e-15 && (c - std::f64::consts::LN_2).abs() <= 1e-12,
        el,
        Some(Duration::from_millis(1)),
        &format!("L = {l}, smooth_l1(0.5) = {s}, conf_loss(equal logits) = {c}"),
    );
}
