//! Timing harness comparing direct quad NMS with the cascade.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nms::{cascaded_nms, nms_quad, Prediction};
use crate::synth::rotated_rect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_boxes: usize,
    /// Mean number of mutually overlapping candidates per object.
    pub density: f64,
    pub repeats: usize,
    pub seed: u64,
    pub thr1: f64,
    pub thr2: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_boxes: 20_000, density: 20.0, repeats: 5, seed: 0, thr1: 0.5, thr2: 0.2 }
    }
}

/// Candidates clustered around `n_boxes / density` objects on a
/// 2048×2048 canvas: each candidate is a perturbed copy of its object.
pub fn dense_predictions(n_boxes: usize, density: f64, seed: u64) -> Vec<Prediction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = ((n_boxes as f64 / density.max(1.0)).ceil() as usize).max(1);
    let objects: Vec<(f64, f64, f64, f64, f64)> = (0..clusters)
        .map(|_| {
            let h = rng.random_range(8.0..40.0);
            (
                rng.random_range(0.0..2048.0),
                rng.random_range(0.0..2048.0),
                h * rng.random_range(1.5..6.0),
                h,
                rng.random_range(-45.0..45.0),
            )
        })
        .collect();
    (0..n_boxes)
        .map(|_| {
            let (cx, cy, w, h, deg) = objects[rng.random_range(0..clusters)];
            let q = rotated_rect(
                cx + rng.random_range(-0.2..0.2) * h,
                cy + rng.random_range(-0.2..0.2) * h,
                w * rng.random_range(0.85..1.15),
                h * rng.random_range(0.85..1.15),
                deg + rng.random_range(-5.0..5.0),
            );
            let score = rng.random_range(0.0..1.0);
            Prediction::new(q, score, 1024).expect("finite generated quad")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

impl Timing {
    fn from_samples(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
        Self { min_ms: ms[0], median_ms: median, max_ms: ms[n - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub direct: Timing,
    pub cascade: Timing,
    /// Direct median over cascade median.
    pub speedup: f64,
    pub kept_direct: usize,
    pub kept_cascade: usize,
    /// With `thr1 = 1` the cascade must return exactly the direct result.
    pub equal_with_stage1_disabled: bool,
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64() * 1e3, out)
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.n_boxes < 2 {
        return Err(Error::Config("benchmark needs at least 2 boxes".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Config("benchmark needs at least 1 repeat".into()));
    }
    let preds = dense_predictions(cfg.n_boxes, cfg.density, cfg.seed);
    let mut direct_ms = Vec::with_capacity(cfg.repeats);
    let mut cascade_ms = Vec::with_capacity(cfg.repeats);
    let mut kept_direct = Vec::new();
    let mut kept_cascade = Vec::new();
    for _ in 0..cfg.repeats {
        let (t, k) = time_ms(|| nms_quad(&preds, cfg.thr2));
        direct_ms.push(t);
        kept_direct = k;
        let (t, k) = time_ms(|| cascaded_nms(&preds, cfg.thr1, cfg.thr2));
        cascade_ms.push(t);
        kept_cascade = k;
    }
    let equal = cascaded_nms(&preds, 1.0, cfg.thr2) == kept_direct;
    let direct = Timing::from_samples(direct_ms);
    let cascade = Timing::from_samples(cascade_ms);
    Ok(BenchReport {
        config: *cfg,
        speedup: direct.median_ms / cascade.median_ms.max(1e-9),
        direct,
        cascade,
        kept_direct: kept_direct.len(),
        kept_cascade: kept_cascade.len(),
        equal_with_stage1_disabled: equal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark_report() {
        let cfg = BenchConfig { n_boxes: 500, repeats: 5, ..Default::default() };
        let r = run_benchmark(&cfg).unwrap();
        assert!(r.equal_with_stage1_disabled);
        assert!(r.direct.min_ms <= r.direct.median_ms && r.direct.median_ms <= r.direct.max_ms);
        assert!(r.cascade.min_ms <= r.cascade.median_ms && r.cascade.median_ms <= r.cascade.max_ms);
        assert!(r.kept_cascade <= 500 && r.kept_direct <= 500);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(run_benchmark(&BenchConfig { n_boxes: 1, ..Default::default() }).is_err());
        assert!(run_benchmark(&BenchConfig { repeats: 0, n_boxes: 10, ..Default::default() }).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(dense_predictions(100, 10.0, 3), dense_predictions(100, 10.0, 3));
    }
}
