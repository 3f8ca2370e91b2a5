//! Default-box grids.
//!
//! Each stage is a `map_w × map_h` grid. Every cell carries one box per
//! aspect ratio (`scale·√ar × scale/√ar`), an extra `√(scale·next_scale)`
//! square box when `ar = 1` is configured, and optionally a twin of every
//! box shifted down by half a cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HRect;

/// Aspect ratios used for oriented text.
pub const TEXT_ASPECT_RATIOS: [f64; 7] = [1.0, 2.0, 3.0, 5.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 5.0];

/// Input sizes with built-in stage presets.
pub const PRESET_INPUT_SIZES: [u32; 3] = [384, 768, 1024];

const PRESET_STRIDES: [u32; 6] = [8, 16, 32, 64, 128, 256];
const MIN_SCALE: f64 = 0.06;
const MAX_SCALE: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub map_w: u32,
    pub map_h: u32,
    pub scale: f64,
    pub next_scale: f64,
}

impl StageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.map_w == 0 || self.map_h == 0 {
            return Err(Error::Config("stage map dimensions must be at least 1".into()));
        }
        let ok = self.scale.is_finite()
            && self.next_scale.is_finite()
            && self.scale > 0.0
            && self.scale <= 1.0
            && self.scale <= self.next_scale
            && self.next_scale <= 1.5;
        if !ok {
            return Err(Error::Config(format!(
                "stage scales must satisfy 0 < scale <= 1 and scale <= next_scale <= 1.5 (got {} / {})",
                self.scale, self.next_scale
            )));
        }
        Ok(())
    }
}

/// Six stages for a square input of `input_size` pixels: maps follow strides
/// 8..256 (rounded up) and scales are spaced linearly from 0.06 to 0.85.
pub fn preset_stages(input_size: u32) -> Vec<StageSpec> {
    let n = PRESET_STRIDES.len();
    let step = (MAX_SCALE - MIN_SCALE) / (n - 1) as f64;
    PRESET_STRIDES
        .iter()
        .enumerate()
        .map(|(k, &stride)| {
            let map = input_size.div_ceil(stride).max(1);
            let scale = MIN_SCALE + step * k as f64;
            StageSpec {
                map_w: map,
                map_h: map,
                scale,
                next_scale: scale + step,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultBox {
    /// Normalized to the unit image square unless rescaled with [`DefaultBox::to_pixels`].
    pub rect: HRect,
    pub stage: usize,
    pub col: u32,
    pub row: u32,
    pub aspect_ratio: f64,
    /// The `√(scale·next_scale)` square box.
    pub extra_scale: bool,
    pub vertical_offset: bool,
}

impl DefaultBox {
    pub fn to_pixels(&self, image_w: f64, image_h: f64) -> DefaultBox {
        let r = self.rect;
        DefaultBox {
            rect: HRect::new(r.cx * image_w, r.cy * image_h, r.w * image_w, r.h * image_h),
            ..*self
        }
    }
}

/// Stage, ratio and offset settings, as read from the `anchors` section of
/// the JSON config. `stages` overrides the `input_size` preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub input_size: u32,
    pub stages: Option<Vec<StageSpec>>,
    pub aspect_ratios: Vec<f64>,
    pub vertical_offsets: bool,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            input_size: 384,
            stages: None,
            aspect_ratios: TEXT_ASPECT_RATIOS.to_vec(),
            vertical_offsets: true,
        }
    }
}

impl AnchorConfig {
    pub fn resolved_stages(&self) -> Result<Vec<StageSpec>> {
        match &self.stages {
            Some(s) => Ok(s.clone()),
            None if PRESET_INPUT_SIZES.contains(&self.input_size) => {
                Ok(preset_stages(self.input_size))
            }
            None => Err(Error::Config(format!(
                "no stage preset for input size {} (presets: 384, 768, 1024)",
                self.input_size
            ))),
        }
    }

    pub fn generate(&self) -> Result<Vec<DefaultBox>> {
        generate_default_boxes(
            &self.resolved_stages()?,
            &self.aspect_ratios,
            self.vertical_offsets,
        )
    }
}

fn validate_ratios(aspect_ratios: &[f64]) -> Result<()> {
    if aspect_ratios.is_empty() {
        return Err(Error::Config("aspect ratio set is empty".into()));
    }
    if let Some(bad) = aspect_ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Config(format!("aspect ratio {bad} is not positive")));
    }
    Ok(())
}

/// Boxes ordered by stage, row, column, aspect ratio (config order, extra
/// square box right after `ar = 1`), then offset flag.
pub fn generate_default_boxes(
    stages: &[StageSpec],
    aspect_ratios: &[f64],
    with_offsets: bool,
) -> Result<Vec<DefaultBox>> {
    validate_ratios(aspect_ratios)?;
    for s in stages {
        s.validate()?;
    }
    let mut out = Vec::with_capacity(default_box_count(stages, aspect_ratios, with_offsets));
    for (stage, spec) in stages.iter().enumerate() {
        let (mw, mh) = (spec.map_w as f64, spec.map_h as f64);
        let offset = 0.5 / mh;
        let extra = (spec.scale * spec.next_scale).sqrt();
        for row in 0..spec.map_h {
            for col in 0..spec.map_w {
                let cx = (col as f64 + 0.5) / mw;
                let cy = (row as f64 + 0.5) / mh;
                let mut push = |w: f64, h: f64, ar: f64, extra_scale: bool| {
                    let base = DefaultBox {
                        rect: HRect::new(cx, cy, w, h),
                        stage,
                        col,
                        row,
                        aspect_ratio: ar,
                        extra_scale,
                        vertical_offset: false,
                    };
                    out.push(base);
                    if with_offsets {
                        out.push(DefaultBox {
                            rect: HRect::new(cx, cy + offset, w, h),
                            vertical_offset: true,
                            ..base
                        });
                    }
                };
                for &ar in aspect_ratios {
                    let s = ar.sqrt();
                    push(spec.scale * s, spec.scale / s, ar, false);
                    if ar == 1.0 {
                        push(extra, extra, 1.0, true);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn default_box_count(stages: &[StageSpec], aspect_ratios: &[f64], with_offsets: bool) -> usize {
    let per_cell = aspect_ratios.len() + aspect_ratios.iter().filter(|&&r| r == 1.0).count();
    let per_cell = per_cell * if with_offsets { 2 } else { 1 };
    let cells: usize = stages
        .iter()
        .map(|s| s.map_w as usize * s.map_h as usize)
        .sum();
    cells * per_cell
}
