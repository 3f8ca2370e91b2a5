//! Ground-truth to default-box assignment, training targets, the
//! multibox loss and hard negative mining.

use serde::{Deserialize, Serialize};

use crate::anchors::DefaultBox;
use crate::codec::{encode_quad, CanonicalQuad, QuadOffsets};
use crate::error::{Error, Result};
use crate::geometry::iou_hrect_or_zero;

/// Loss weight on the localization term.
pub const DEFAULT_ALPHA: f64 = 0.2;
/// IOU above which a default box is matched to its best ground truth.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;
/// Negative:positive ratios of the two training stages.
pub const NEG_RATIO_STAGE1: f64 = 3.0;
pub const NEG_RATIO_STAGE2: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAssignment {
    /// Matched ground-truth index per default box.
    pub matched: Vec<Option<usize>>,
    /// Best IOU of each default box over all ground truths.
    pub best_iou: Vec<f64>,
    pub num_gts: usize,
}

impl MatchAssignment {
    pub fn positive_count(&self) -> usize {
        self.matched.iter().filter(|m| m.is_some()).count()
    }

    /// `(default index, gt index)` pairs with `x_ij = 1`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matched
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.map(|j| (i, j)))
    }

    pub fn matches_per_gt(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_gts];
        for (_, j) in self.pairs() {
            counts[j] += 1;
        }
        counts
    }
}

/// Two-rule matching on enclosing rectangles.
///
/// First every ground truth takes the default box it overlaps most, greedily
/// by descending IOU with each default used once. Then every remaining
/// default whose best IOU exceeds `thr` is matched to that best ground truth.
/// Ties resolve to the lower index. Defaults and ground truths must be in
/// the same coordinate frame.
pub fn match_defaults(
    defaults: &[DefaultBox],
    gts: &[CanonicalQuad],
    thr: f64,
) -> Result<MatchAssignment> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::Config(format!("match threshold {thr} is outside (0, 1)")));
    }
    if defaults.is_empty() && !gts.is_empty() {
        return Err(Error::Config("no default boxes to match ground truths against".into()));
    }
    let n = defaults.len();
    let m = gts.len();
    let mut matched = vec![None; n];
    let mut best_iou = vec![0.0; n];
    if m == 0 {
        return Ok(MatchAssignment { matched, best_iou, num_gts: 0 });
    }

    // iou[i * m + j]
    let iou: Vec<f64> = defaults
        .iter()
        .flat_map(|d| gts.iter().map(move |g| iou_hrect_or_zero(&d.rect, &g.enclosing)))
        .collect();

    let mut best_gt = vec![0usize; n];
    for i in 0..n {
        let row = &iou[i * m..(i + 1) * m];
        let mut bj = 0;
        for j in 1..m {
            if row[j] > row[bj] {
                bj = j;
            }
        }
        best_gt[i] = bj;
        best_iou[i] = row[bj];
    }

    // Rule (a): bipartite greedy.
    let mut gt_done = vec![false; m];
    let mut used = vec![false; n];
    for _ in 0..m.min(n) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| !used[i]) {
            let row = &iou[i * m..(i + 1) * m];
            for j in (0..m).filter(|&j| !gt_done[j]) {
                if best.is_none_or(|(_, _, b)| row[j] > b) {
                    best = Some((i, j, row[j]));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        matched[i] = Some(j);
        used[i] = true;
        gt_done[j] = true;
    }

    // Rule (b): threshold.
    for i in 0..n {
        if matched[i].is_none() && best_iou[i] > thr {
            matched[i] = Some(best_gt[i]);
        }
    }
    Ok(MatchAssignment { matched, best_iou, num_gts: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    fn class(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

/// Per-default labels and regression targets, plus the network outputs
/// they are scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTargets {
    pub labels: Vec<Label>,
    /// Ground-truth offsets, present exactly on positives.
    pub loc_targets: Vec<Option<QuadOffsets>>,
    /// `[background, text]` logits per default.
    pub conf_logits: Vec<[f64; 2]>,
    /// Predicted offsets per default.
    pub loc_preds: Vec<QuadOffsets>,
}

impl TrainingTargets {
    /// Builds targets from an assignment; `defaults` and `gts` must be the
    /// ones the assignment was computed from.
    pub fn build(
        defaults: &[DefaultBox],
        gts: &[CanonicalQuad],
        assignment: &MatchAssignment,
        conf_logits: Vec<[f64; 2]>,
        loc_preds: Vec<QuadOffsets>,
    ) -> Result<Self> {
        let n = defaults.len();
        for len in [assignment.matched.len(), conf_logits.len(), loc_preds.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, actual: len });
            }
        }
        let mut labels = Vec::with_capacity(n);
        let mut loc_targets = Vec::with_capacity(n);
        for (d, m) in defaults.iter().zip(&assignment.matched) {
            match m {
                Some(j) => {
                    labels.push(Label::Positive);
                    loc_targets.push(Some(encode_quad(&gts[*j], &d.rect)?));
                }
                None => {
                    labels.push(Label::Negative);
                    loc_targets.push(None);
                }
            }
        }
        Ok(Self { labels, loc_targets, conf_logits, loc_preds })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Softmax cross-entropy over two classes, via log-sum-exp.
pub fn conf_loss(logits: [f64; 2], label: Label) -> f64 {
    let mx = logits[0].max(logits[1]);
    let lse = mx + ((logits[0] - mx).exp() + (logits[1] - mx).exp()).ln();
    (lse - logits[label.class()]).max(0.0)
}

/// `(L_conf + α·L_loc) / N`, with `N = 0` giving 0.
pub fn combine_loss(l_conf: f64, l_loc: f64, n: usize, alpha: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (l_conf + alpha * l_loc) / n as f64
    }
}

/// Indices of the `min(⌊ratio·positives⌋, available)` highest losses,
/// highest first, ties to the lower index.
pub fn hard_negative_select(neg_conf_losses: &[f64], positive_count: usize, ratio: f64) -> Vec<usize> {
    if positive_count == 0 || ratio.is_nan() || ratio <= 0.0 {
        return Vec::new();
    }
    let k = ((ratio * positive_count as f64).floor() as usize).min(neg_conf_losses.len());
    let mut idx: Vec<usize> = (0..neg_conf_losses.len()).collect();
    idx.sort_by(|&a, &b| {
        neg_conf_losses[b]
            .total_cmp(&neg_conf_losses[a])
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub neg_ratio: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, neg_ratio: NEG_RATIO_STAGE1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub conf: f64,
    pub loc: f64,
    pub num_matched: usize,
    pub num_negatives: usize,
    pub total: f64,
}

/// Forward evaluation of the multibox loss: confidence loss over positives
/// and mined negatives plus `alpha` times smooth-L1 over all positive
/// offset components, divided by the number of matched defaults.
pub fn total_loss(
    t: &TrainingTargets,
    a: &MatchAssignment,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let n = t.labels.len();
    for len in [a.matched.len(), t.loc_targets.len(), t.conf_logits.len(), t.loc_preds.len()] {
        if len != n {
            return Err(Error::Shape { expected: n, actual: len });
        }
    }
    if cfg.alpha.is_nan() || cfg.alpha <= 0.0 {
        return Err(Error::Config("loss weight alpha must be positive".into()));
    }
    let num_matched = a.positive_count();
    let mut l_conf = 0.0;
    let mut l_loc = 0.0;
    let mut neg_idx = Vec::new();
    let mut neg_losses = Vec::new();
    for i in 0..n {
        match t.labels[i] {
            Label::Positive => {
                l_conf += conf_loss(t.conf_logits[i], Label::Positive);
                if let Some(target) = &t.loc_targets[i] {
                    let p = t.loc_preds[i].to_array();
                    let g = target.to_array();
                    l_loc += p.iter().zip(g).map(|(p, g)| smooth_l1(p - g)).sum::<f64>();
                }
            }
            Label::Negative => {
                neg_idx.push(i);
                neg_losses.push(conf_loss(t.conf_logits[i], Label::Negative));
            }
        }
    }
    let mined = hard_negative_select(&neg_losses, num_matched, cfg.neg_ratio);
    l_conf += mined.iter().map(|&k| neg_losses[k]).sum::<f64>();
    Ok(LossBreakdown {
        conf: l_conf,
        loc: l_loc,
        num_matched,
        num_negatives: mined.len(),
        total: combine_loss(l_conf, l_loc, num_matched, cfg.alpha),
    })
}
