//! Detection re-scoring with recognition output.
//!
//! The combined score is the harmonic mean of `e^{s_d}` and `e^{s_r}`:
//! `S = 2·e^{s_d+s_r} / (e^{s_d} + e^{s_r})`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Quad;

pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.6;
pub const DEFAULT_RECOGNITION_THRESHOLD: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecognitionCandidate {
    /// `p(w | I)` for lexicon words the recognizer scored.
    pub word_probs: BTreeMap<String, f64>,
    /// Lexicon-free output and its probability.
    pub best_free: (String, f64),
}

/// Lexicon-free probability, or the best probability over `lexicon`.
/// Lexicon words the recognizer did not score count as probability 0.
pub fn recognition_score(
    cand: &RecognitionCandidate,
    lexicon: Option<&BTreeSet<String>>,
) -> Result<f64> {
    match lexicon {
        None => Ok(cand.best_free.1),
        Some(lex) if lex.is_empty() => Err(Error::Config("lexicon is empty".into())),
        Some(lex) => Ok(lex
            .iter()
            .map(|w| cand.word_probs.get(w).copied().unwrap_or(0.0))
            .fold(0.0, f64::max)),
    }
}

pub fn combined_score(s_d: f64, s_r: f64) -> f64 {
    2.0 / ((-s_d).exp() + (-s_r).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedDetection {
    /// Index into the input detections.
    pub index: usize,
    pub quad: Quad,
    pub detection_score: f64,
    pub recognition_score: f64,
    pub combined: f64,
    pub word: String,
}

/// Scores every detection with [`combined_score`], keeps those with
/// `S >= s_thr`, and orders them by descending `S` (ties by index).
pub fn refine_detections(
    dets: &[(Quad, f64)],
    rec: &[RecognitionCandidate],
    lexicon: Option<&BTreeSet<String>>,
    s_thr: f64,
) -> Result<Vec<RefinedDetection>> {
    if dets.len() != rec.len() {
        return Err(Error::Shape { expected: dets.len(), actual: rec.len() });
    }
    let mut out = Vec::with_capacity(dets.len());
    for (index, ((quad, s_d), cand)) in dets.iter().zip(rec).enumerate() {
        let s_r = recognition_score(cand, lexicon)?;
        let combined = combined_score(*s_d, s_r);
        if combined >= s_thr {
            let word = match lexicon {
                None => cand.best_free.0.clone(),
                Some(lex) => lex
                    .iter()
                    .filter(|w| cand.word_probs.contains_key(*w))
                    .max_by(|a, b| cand.word_probs[*a].total_cmp(&cand.word_probs[*b]))
                    .cloned()
                    .unwrap_or_default(),
            };
            out.push(RefinedDetection {
                index,
                quad: *quad,
                detection_score: *s_d,
                recognition_score: s_r,
                combined,
                word,
            });
        }
    }
    out.sort_by(|a, b| b.combined.total_cmp(&a.combined).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// One record of a recognition sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRecord {
    pub box_index: usize,
    pub best_word: String,
    pub best_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_probs: Option<BTreeMap<String, f64>>,
}

/// Parses a sidecar JSON array into one candidate per box, indexed by
/// `box_index`. Every index in `0..num_boxes` must appear exactly once.
pub fn parse_sidecar(json: &str, num_boxes: usize) -> Result<Vec<RecognitionCandidate>> {
    let records: Vec<SidecarRecord> = serde_json::from_str(json).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut slots: Vec<Option<RecognitionCandidate>> = vec![None; num_boxes];
    for r in records {
        if r.box_index >= num_boxes {
            return Err(Error::Shape { expected: num_boxes, actual: r.box_index + 1 });
        }
        let probs = [r.best_prob]
            .into_iter()
            .chain(r.lexicon_probs.iter().flat_map(|m| m.values().copied()));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} is outside [0, 1]")));
            }
        }
        if slots[r.box_index].is_some() {
            return Err(Error::Config(format!("box_index {} appears twice", r.box_index)));
        }
        slots[r.box_index] = Some(RecognitionCandidate {
            word_probs: r.lexicon_probs.unwrap_or_default(),
            best_free: (r.best_word, r.best_prob),
        });
    }
    let present = slots.iter().filter(|s| s.is_some()).count();
    if present != num_boxes {
        return Err(Error::Shape { expected: num_boxes, actual: present });
    }
    Ok(slots.into_iter().flatten().collect())
}
