use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use quadbox::augment::{apply_crop, sample_crop, CropSample};
use quadbox::bench::{run_benchmark, BenchConfig};
use quadbox::codec::{decode_quad, decode_rrect, encode_quad, encode_rrect, quad_to_rrect};
use quadbox::eval::{
    evaluate_dataset, format_det_file, format_gt_file, parse_det_file, parse_gt_file,
    DetectionEntry,
};
use quadbox::fusion::{combined_score, parse_sidecar, refine_detections, RefinedDetection};
use quadbox::matching::match_defaults;
use quadbox::nms::{cascaded_nms, rescale_predictions, Prediction};
use quadbox::synth::{synth_predictions, SceneDiagnostics, SyntheticScene};
use quadbox::{rrect_to_quad, Config, HRect, QuadOffsets, RRectOffsets};

#[derive(Parser)]
#[command(name = "quadbox", version, about = "Oriented text box geometry, NMS and evaluation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Anchor preset: 384, 768 or 1024.
    #[arg(long, global = true)]
    input_size: Option<u32>,
    /// Evaluation IOU threshold [default: 0.5].
    #[arg(long, global = true)]
    iou_thr: Option<f64>,
    /// Rectangle NMS threshold [default: 0.5].
    #[arg(long, global = true)]
    nms_thr1: Option<f64>,
    /// Quadrilateral NMS threshold [default: 0.2].
    #[arg(long, global = true)]
    nms_thr2: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump default boxes as JSON.
    Anchors {
        /// Print only the number of boxes.
        #[arg(long)]
        count: bool,
        /// Scale boxes to this image size (WxH) instead of unit coordinates.
        #[arg(long, value_parser = parse_size)]
        image_size: Option<(f64, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regression targets for every positive default box of a gt file.
    Encode {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_parser = parse_size)]
        image_size: (f64, f64),
        #[arg(long)]
        match_thr: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode offsets (the `encode` JSON format) into a detection file.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Repr::Quad)]
        repr: Repr,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score filtering and cascaded NMS over `res_*.txt` files.
    Nms {
        /// A detection file or a directory of `res_*.txt` files.
        #[arg(long)]
        dets: PathBuf,
        /// Output file (single input) or directory.
        #[arg(long)]
        out: PathBuf,
        /// Drop detections below this score first [default: 0.6].
        #[arg(long)]
        score_thr: Option<f64>,
        /// Image size the detections were produced at (WxH).
        #[arg(long, value_parser = parse_size, requires = "to_size")]
        from_size: Option<(f64, f64)>,
        /// Rescale detections to this image size before NMS.
        #[arg(long, value_parser = parse_size, requires = "from_size")]
        to_size: Option<(f64, f64)>,
    },
    /// Precision, recall and F-measure over `res_<stem>.txt` / `gt_<stem>.txt` pairs.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        /// Print a text table instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample constrained crops and transform the ground truth.
    Augment {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_parser = parse_size)]
        image_size: (f64, f64),
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score detections with recognition sidecars (`rec_<stem>.json`).
    Fuse {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        /// One lexicon word per line.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// [default: 0.6]
        #[arg(long)]
        det_thr: Option<f64>,
        /// [default: 0.005]
        #[arg(long)]
        rec_thr: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic `gt_*.txt` scenes and pre-NMS `res_*.txt` predictions.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, value_parser = parse_size, default_value = "512x512")]
        image_size: (f64, f64),
        #[arg(long, default_value_t = 8)]
        words: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        clutter: usize,
    },
    /// Time direct quadrilateral NMS against the cascade.
    Bench {
        #[arg(long, default_value_t = 20_000)]
        boxes: usize,
        #[arg(long, default_value_t = 20.0)]
        density: f64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Repr {
    Quad,
    Rrect,
}

fn parse_size(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    let nums = nums.map_err(|_| format!("{s:?} is not WxH"))?;
    let (w, h) = match nums[..] {
        [v] => (v, v),
        [w, h] => (w, h),
        _ => return Err(format!("{s:?} is not WxH")),
    };
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(format!("image size {s:?} must be positive"));
    }
    Ok((w, h))
}

/// Config file values with flag overrides applied.
fn resolve_config(g: &GlobalArgs) -> anyhow::Result<Config> {
    let mut c = match &g.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    if let Some(s) = g.input_size {
        c.anchors.input_size = s;
    }
    if let Some(v) = g.iou_thr {
        c.eval.iou_threshold = v;
    }
    if let Some(v) = g.nms_thr1 {
        c.nms.thr1 = v;
    }
    if let Some(v) = g.nms_thr2 {
        c.nms.thr2 = v;
    }
    for (name, v) in [("nms-thr1", c.nms.thr1), ("nms-thr2", c.nms.thr2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(quadbox::Error::Config(format!("{name} {v} is outside [0, 1]")).into());
        }
    }
    Ok(c)
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_output(out, &s)
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| quadbox::Error::Io(format!("{}: {e}", path.display())).into())
}

/// One positive default box and its regression targets.
#[derive(Serialize, Deserialize)]
struct EncodedRecord {
    default_index: usize,
    gt_index: usize,
    anchor: HRect,
    quad_offsets: [f64; 12],
    rrect_offsets: [f64; 9],
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

fn cmd_anchors(cfg: &Config, count: bool, image_size: Option<(f64, f64)>, out: Option<&Path>) -> anyhow::Result<()> {
    let mut boxes = cfg.anchors.generate()?;
    if count {
        return write_json(out, &json!({ "count": boxes.len() }));
    }
    if let Some((w, h)) = image_size {
        boxes = boxes.iter().map(|b| b.to_pixels(w, h)).collect();
    }
    write_json(out, &json!({ "count": boxes.len(), "boxes": boxes }))
}

fn cmd_encode(cfg: &Config, gt: &Path, size: (f64, f64), thr: Option<f64>, out: Option<&Path>) -> anyhow::Result<()> {
    let gts = parse_gt_file(&read(gt)?)?;
    let care: Vec<_> = gts.iter().filter(|g| !g.dont_care).map(|g| g.quad).collect();
    let defaults: Vec<_> = cfg.anchors.generate()?.iter().map(|d| d.to_pixels(size.0, size.1)).collect();
    let assignment = match_defaults(&defaults, &care, thr.unwrap_or(cfg.matching.threshold))?;
    let records = assignment
        .pairs()
        .map(|(i, j)| {
            let d = &defaults[i].rect;
            let g = &care[j];
            let rrect = quad_to_rrect(g)?;
            Ok(EncodedRecord {
                default_index: i,
                gt_index: j,
                anchor: *d,
                quad_offsets: encode_quad(g, d)?.to_array(),
                rrect_offsets: encode_rrect(&rrect, &g.enclosing, d)?.to_array(),
                score: 1.0,
            })
        })
        .collect::<quadbox::Result<Vec<_>>>()?;
    write_json(
        out,
        &json!({
            "num_defaults": defaults.len(),
            "num_gts": care.len(),
            "positives": records,
        }),
    )
}

#[derive(Deserialize)]
struct EncodedFile {
    positives: Vec<EncodedRecord>,
}

fn cmd_decode(input: &Path, repr: Repr, out: Option<&Path>) -> anyhow::Result<()> {
    let file: EncodedFile = serde_json::from_str(&read(input)?)
        .map_err(|e| quadbox::Error::Parse { line: e.line(), message: e.to_string() })?;
    let dets = file
        .positives
        .iter()
        .map(|r| {
            let quad = match repr {
                Repr::Quad => decode_quad(&QuadOffsets::from_array(r.quad_offsets), &r.anchor)?.1,
                Repr::Rrect => {
                    let o = r.rrect_offsets;
                    let off = RRectOffsets { dx: o[0], dy: o[1], dw: o[2], dh: o[3], dr: [o[4], o[5], o[6], o[7], o[8]] };
                    rrect_to_quad(&decode_rrect(&off, &r.anchor)?.1)?
                }
            };
            Ok(DetectionEntry { quad, score: r.score })
        })
        .collect::<quadbox::Result<Vec<_>>>()?;
    write_output(out, &format_det_file(&dets))
}

/// `(input, output)` pairs for a file or a directory of files named `prefix*suffix`.
fn file_pairs(input: &Path, out: &Path, prefix: &str, suffix: &str) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    if input.is_file() {
        return Ok(vec![(input.to_path_buf(), out.to_path_buf())]);
    }
    let mut pairs = Vec::new();
    let entries = fs::read_dir(input).map_err(|e| quadbox::Error::Io(format!("{}: {e}", input.display())))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if name.starts_with(prefix) && name.ends_with(suffix) {
            pairs.push((path.clone(), out.join(name)));
        }
    }
    pairs.sort();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(pairs)
}

#[derive(Serialize)]
struct NmsFileSummary {
    file: String,
    input: usize,
    above_threshold: usize,
    kept: usize,
    warnings: Vec<String>,
}

fn nms_file(
    cfg: &Config,
    src: &Path,
    dst: &Path,
    score_thr: f64,
    sizes: Option<((f64, f64), (f64, f64))>,
) -> anyhow::Result<NmsFileSummary> {
    let parsed = parse_det_file(&read(src)?).map_err(|e| match e {
        quadbox::Error::Parse { line, message } => {
            quadbox::Error::Parse { line, message: format!("{}: {message}", src.display()) }
        }
        other => other,
    })?;
    let mut preds = parsed
        .entries
        .iter()
        .filter(|d| d.score >= score_thr)
        .map(|d| Prediction::new(d.quad, d.score, cfg.anchors.input_size))
        .collect::<quadbox::Result<Vec<_>>>()?;
    if let Some((from, to)) = sizes {
        preds = rescale_predictions(&preds, from, to)?;
    }
    let keep = cascaded_nms(&preds, cfg.nms.thr1, cfg.nms.thr2);
    let kept: Vec<DetectionEntry> = keep.iter().map(|&i| DetectionEntry { quad: preds[i].quad, score: preds[i].score }).collect();
    fs::write(dst, format_det_file(&kept)).with_context(|| format!("writing {}", dst.display()))?;
    Ok(NmsFileSummary {
        file: src.display().to_string(),
        input: parsed.entries.len(),
        above_threshold: preds.len(),
        kept: kept.len(),
        warnings: parsed.warnings.iter().map(|w| format!("line {}: {}", w.line, w.message)).collect(),
    })
}

fn cmd_nms(
    cfg: &Config,
    dets: &Path,
    out: &Path,
    score_thr: Option<f64>,
    sizes: Option<((f64, f64), (f64, f64))>,
) -> anyhow::Result<()> {
    let score_thr = score_thr.unwrap_or(cfg.nms.score_threshold);
    let pairs = file_pairs(dets, out, "res_", ".txt")?;
    let summaries = pairs
        .par_iter()
        .map(|(src, dst)| nms_file(cfg, src, dst, score_thr, sizes))
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(
        None,
        &json!({
            "thr1": cfg.nms.thr1,
            "thr2": cfg.nms.thr2,
            "score_threshold": score_thr,
            "files": summaries,
        }),
    )
}

fn cmd_eval(cfg: &Config, dets: &Path, gts: &Path, table: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let report = evaluate_dataset(dets, gts, cfg.eval.iou_threshold)?;
    if table {
        write_output(out, &report.to_table())
    } else {
        write_json(out, &report)
    }
}

#[derive(Serialize)]
struct AugmentSample {
    seed: u64,
    crop: Option<CropSample>,
    gts: Vec<[f64; 8]>,
}

fn cmd_augment(cfg: &Config, seed: u64, gt: &Path, size: (f64, f64), samples: usize, out: Option<&Path>) -> anyhow::Result<()> {
    cfg.augment.validate()?;
    let gts: Vec<_> = parse_gt_file(&read(gt)?)?.into_iter().map(|g| g.quad).collect();
    let results = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let crop = sample_crop(size, &gts, &cfg.augment, s)?;
            let kept = match &crop {
                Some(c) => apply_crop(c, &gts, cfg.augment.output_size)?,
                None => Vec::new(),
            };
            Ok(AugmentSample { seed: s, crop, gts: kept.iter().map(|g| g.quad.coords()).collect() })
        })
        .collect::<quadbox::Result<Vec<_>>>()?;
    write_json(out, &json!({ "output_size": cfg.augment.output_size, "samples": results }))
}

#[derive(Serialize)]
struct FusedImage {
    stem: String,
    detections: Vec<RefinedDetection>,
}

fn read_lexicon(path: &Path) -> anyhow::Result<BTreeSet<String>> {
    Ok(read(path)?.lines().map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect())
}

fn cmd_fuse(
    cfg: &Config,
    dets: &Path,
    rec: &Path,
    lexicon: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let lexicon = lexicon.map(read_lexicon).transpose()?;
    let thr = cfg.fusion.effective_threshold();
    let mut stems = Vec::new();
    for entry in fs::read_dir(dets).map_err(|e| quadbox::Error::Io(format!("{}: {e}", dets.display())))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_prefix("res_").and_then(|n| n.strip_suffix(".txt")) {
            stems.push((stem.to_string(), path.clone()));
        }
    }
    stems.sort();
    let images = stems
        .par_iter()
        .map(|(stem, path)| {
            let parsed = parse_det_file(&read(path)?)?;
            let rec_path = rec.join(format!("rec_{stem}.json"));
            if !rec_path.is_file() {
                bail!(quadbox::Error::Dataset(format!("no recognition sidecar {}", rec_path.display())));
            }
            let cands = parse_sidecar(&read(&rec_path)?, parsed.entries.len())?;
            let d: Vec<_> = parsed.entries.iter().map(|e| (e.quad, e.score)).collect();
            let detections = refine_detections(&d, &cands, lexicon.as_ref(), thr)?;
            Ok(FusedImage { stem: stem.clone(), detections })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(out, &json!({ "combined_threshold": thr, "images": images }))
}

#[derive(Serialize)]
struct SynthSummary {
    stem: String,
    gts: usize,
    predictions: usize,
    diagnostics: SceneDiagnostics,
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    cfg: &Config,
    seed: u64,
    out: &Path,
    scenes: usize,
    size: (f64, f64),
    words: usize,
    noise: f64,
    clutter: usize,
) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let summaries = (0..scenes)
        .into_par_iter()
        .map(|k| {
            let scene = SyntheticScene::random(seed.wrapping_add(k as u64), size, words, noise, clutter);
            let pred = synth_predictions(&scene, &cfg.anchors, cfg.matching.threshold)?;
            let stem = format!("scene{k:04}");
            fs::write(out.join(format!("gt_{stem}.txt")), format_gt_file(&scene.gt_entries()))?;
            fs::write(out.join(format!("res_{stem}.txt")), format_det_file(&pred.det_entries()))?;
            Ok(SynthSummary { stem, gts: scene.gts.len(), predictions: pred.predictions.len(), diagnostics: pred.diagnostics })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(None, &json!({ "seed": seed, "scenes": summaries }))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if let Some(j) = g.jobs {
        if j == 0 {
            bail!(quadbox::Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let mut cfg = resolve_config(g)?;
    match cli.command {
        Command::Anchors { count, image_size, out } => cmd_anchors(&cfg, count, image_size, out.as_deref()),
        Command::Encode { gt, image_size, match_thr, out } => cmd_encode(&cfg, &gt, image_size, match_thr, out.as_deref()),
        Command::Decode { input, repr, out } => cmd_decode(&input, repr, out.as_deref()),
        Command::Nms { dets, out, score_thr, from_size, to_size } => {
            cmd_nms(&cfg, &dets, &out, score_thr, from_size.zip(to_size))
        }
        Command::Eval { dets, gts, table, out } => cmd_eval(&cfg, &dets, &gts, table, out.as_deref()),
        Command::Augment { gt, image_size, samples, out } => {
            cmd_augment(&cfg, g.seed, &gt, image_size, samples, out.as_deref())
        }
        Command::Fuse { dets, rec, lexicon, det_thr, rec_thr, out } => {
            if let Some(v) = det_thr {
                cfg.fusion.detection_threshold = v;
            }
            if let Some(v) = rec_thr {
                cfg.fusion.recognition_threshold = v;
            }
            if det_thr.is_some() || rec_thr.is_some() {
                cfg.fusion.combined_threshold =
                    Some(combined_score(cfg.fusion.detection_threshold, cfg.fusion.recognition_threshold));
            }
            cmd_fuse(&cfg, &dets, &rec, lexicon.as_deref(), out.as_deref())
        }
        Command::Synth { out, scenes, image_size, words, noise, clutter } => {
            cmd_synth(&cfg, g.seed, &out, scenes, image_size, words, noise, clutter)
        }
        Command::Bench { boxes, density, repeats, out } => {
            let bc = BenchConfig { n_boxes: boxes, density, repeats, seed: g.seed, thr1: cfg.nms.thr1, thr2: cfg.nms.thr2 };
            write_json(out.as_deref(), &run_benchmark(&bc)?)
        }
    }
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<quadbox::Error>())
        .map_or_else(
            || if e.chain().any(|c| c.is::<std::io::Error>()) { "io" } else { "other" },
            |q| q.kind(),
        );
    json!({ "error": { "kind": kind, "message": format!("{e:#}") } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": msg.trim() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
