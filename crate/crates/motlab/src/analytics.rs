//! Diagnostics over completed training logs and simplified CLEAR-MOT
//! evaluation of tracker output.

use crate::assignment::{hungarian, CostMatrix};
use crate::engine::IterationRecord;
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::lifecycle::Role;
use crate::world::FrameSeq;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-epoch split of label supervision between the detection and
/// association parts, measured on final-stage matchings only.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochAssignment {
    pub epoch: usize,
    pub labels_to_detect: u64,
    pub labels_to_track: u64,
}

impl EpochAssignment {
    pub fn pct_detect(&self) -> f64 {
        let total = self.labels_to_detect + self.labels_to_track;
        if total == 0 {
            0.0
        } else {
            self.labels_to_detect as f64 / total as f64
        }
    }
}

/// Assignment dynamics across epochs plus per-slot activation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentStats {
    pub epochs: Vec<EpochAssignment>,
    /// Final-stage match count per detect slot index, whole log.
    pub activations: BTreeMap<usize, u64>,
}

/// Count, per epoch, how many labels trained a detect query versus a track
/// query at the final stage.
pub fn assignment_stats(records: &[IterationRecord]) -> Result<AssignmentStats> {
    if records.is_empty() {
        return Err(Error::TruncatedLog);
    }
    let mut per_epoch: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut activations: BTreeMap<usize, u64> = BTreeMap::new();
    for rec in records {
        let slot = per_epoch.entry(rec.epoch).or_default();
        for frame in &rec.frames {
            for role in &frame.label_roles {
                match role.role {
                    Role::Detect => {
                        slot.0 += 1;
                        *activations.entry(role.query).or_default() += 1;
                    }
                    Role::Track => slot.1 += 1,
                }
            }
        }
    }
    Ok(AssignmentStats {
        epochs: per_epoch
            .into_iter()
            .map(|(epoch, (d, t))| EpochAssignment {
                epoch,
                labels_to_detect: d,
                labels_to_track: t,
            })
            .collect(),
        activations,
    })
}

/// Per-epoch fraction of labels whose matched query differs between some
/// non-final stage and the final stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MisalignmentStats {
    pub epochs: Vec<(usize, f64)>,
}

pub fn misalignment_stats(records: &[IterationRecord]) -> Result<MisalignmentStats> {
    if records.is_empty() {
        return Err(Error::TruncatedLog);
    }
    let mut per_epoch: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for rec in records {
        let counter = per_epoch.entry(rec.epoch).or_default();
        for frame in &rec.frames {
            if frame.stage_matchings.is_empty() {
                return Err(Error::TruncatedLog);
            }
            let (final_stage, earlier) = frame.stage_matchings.split_last().unwrap();
            let final_by_label: BTreeMap<usize, usize> =
                final_stage.iter().map(|&(q, l)| (l, q)).collect();
            for label in 0..frame.objects {
                let reference = final_by_label.get(&label);
                let misaligned = earlier.iter().any(|stage| {
                    let q = stage.iter().find(|&&(_, l)| l == label).map(|&(q, _)| q);
                    q.as_ref() != reference
                });
                counter.1 += 1;
                if misaligned {
                    counter.0 += 1;
                }
            }
        }
    }
    Ok(MisalignmentStats {
        epochs: per_epoch
            .into_iter()
            .map(|(epoch, (mis, total))| {
                (
                    epoch,
                    if total == 0 {
                        0.0
                    } else {
                        mis as f64 / total as f64
                    },
                )
            })
            .collect(),
    })
}

/// Simplified CLEAR-MOT evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mota: f64,
    pub ids: u64,
    pub idf1_lite: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub gt_total: u64,
    pub pred_total: u64,
    pub idtp: u64,
    pub iou_threshold: f64,
}

/// Evaluate tracker output against ground truth.
///
/// Per frame, predictions and labels are matched by Hungarian assignment on
/// IoU; pairs below the threshold do not count. MOTA is
/// `1 - (FN + FP + IDS) / GT`; IDS counts matched-identity changes per
/// ground-truth identity; IDF1-lite scores a global greedy
/// (highest-overlap-first) identity mapping.
pub fn evaluate(pred: &FrameSeq, gt: &FrameSeq, iou_threshold: f64) -> Result<EvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::MisalignedFrames(format!(
            "{} prediction frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut gt_total = 0u64;
    let mut pred_total = 0u64;
    // Per GT identity, the last matched output identity.
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut ids = 0u64;
    // (gt identity, output identity) -> frames with IoU above threshold.
    let mut overlap: BTreeMap<(u64, u64), u64> = BTreeMap::new();

    const INELIGIBLE: f64 = 1e6;
    for (pf, gf) in pred.iter().zip(gt.iter()) {
        gt_total += gf.len() as u64;
        pred_total += pf.len() as u64;
        for p in pf {
            for g in gf {
                if iou(p.bbox, g.bbox)? >= iou_threshold {
                    *overlap.entry((g.identity, p.identity)).or_default() += 1;
                }
            }
        }
        if gf.is_empty() {
            fp += pf.len() as u64;
            continue;
        }
        if pf.is_empty() {
            fn_ += gf.len() as u64;
            continue;
        }
        // Orient so that the label side is not wider than the query side.
        let flip = pf.len() < gf.len();
        let (rows, cols) = if flip { (gf, pf) } else { (pf, gf) };
        let mut cost = Vec::with_capacity(rows.len() * cols.len());
        for r in rows {
            for c in cols {
                let v = iou(r.bbox, c.bbox)?;
                cost.push(if v >= iou_threshold {
                    1.0 - v
                } else {
                    INELIGIBLE
                });
            }
        }
        let matching = hungarian(&CostMatrix::new(rows.len(), cols.len(), cost))?;
        let mut matched_pred = vec![false; pf.len()];
        let mut matched_gt = vec![false; gf.len()];
        for &(r, c) in &matching.pairs {
            let (p_idx, g_idx) = if flip { (c, r) } else { (r, c) };
            if iou(pf[p_idx].bbox, gf[g_idx].bbox)? < iou_threshold {
                continue;
            }
            matched_pred[p_idx] = true;
            matched_gt[g_idx] = true;
            let g_id = gf[g_idx].identity;
            let p_id = pf[p_idx].identity;
            if let Some(prev) = last_match.get(&g_id) {
                if *prev != p_id {
                    ids += 1;
                }
            }
            last_match.insert(g_id, p_id);
        }
        fp += matched_pred.iter().filter(|&&m| !m).count() as u64;
        fn_ += matched_gt.iter().filter(|&&m| !m).count() as u64;
    }

    // Greedy highest-overlap-first identity mapping.
    let mut pairs: Vec<((u64, u64), u64)> = overlap.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut used_gt = std::collections::BTreeSet::new();
    let mut used_pred = std::collections::BTreeSet::new();
    let mut idtp = 0u64;
    for ((g, p), count) in pairs {
        if used_gt.contains(&g) || used_pred.contains(&p) {
            continue;
        }
        used_gt.insert(g);
        used_pred.insert(p);
        idtp += count;
    }
    let idf1_lite = if gt_total + pred_total == 0 {
        1.0
    } else {
        2.0 * idtp as f64 / (gt_total + pred_total) as f64
    };
    let mota = 1.0 - (fn_ + fp + ids) as f64 / gt_total.max(1) as f64;
    Ok(EvalReport {
        mota,
        ids,
        idf1_lite,
        false_positives: fp,
        false_negatives: fn_,
        gt_total,
        pred_total,
        idtp,
        iou_threshold,
    })
}

/// `epoch,pct_detect,pct_track,misaligned_fraction` rows.
pub fn assignment_csv(stats: &AssignmentStats, mis: &MisalignmentStats) -> String {
    let mut out = String::from("epoch,pct_detect,pct_track,misaligned_fraction\n");
    let mis_by_epoch: BTreeMap<usize, f64> = mis.epochs.iter().copied().collect();
    for e in &stats.epochs {
        let pct = e.pct_detect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch,
            pct,
            1.0 - pct,
            mis_by_epoch.get(&e.epoch).copied().unwrap_or(0.0)
        ));
    }
    out
}

/// `slot_id,activation_count` rows over the whole log.
pub fn activation_csv(stats: &AssignmentStats) -> String {
    let mut out = String::from("slot_id,activation_count\n");
    for (slot, count) in &stats.activations {
        out.push_str(&format!("{slot},{count}\n"));
    }
    out
}
