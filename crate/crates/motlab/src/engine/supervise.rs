//! Per-frame supervision: which matching feeds which loss at each stage.
//!
//! Three components are assembled per frame:
//!
//! - the base matching loss over real queries (all-queries space in
//!   non-final stages when release-fetch supervision is on, otherwise the
//!   detect/free matching joined with the propagated track assignment; the
//!   final stage always uses the latter),
//! - the pseudo-label loss over real queries, per stage,
//! - the group-denoising loss over augmented copies, which reuse their
//!   origin slot's propagated assignment at every stage.

use crate::assignment::{match_in_space, Matching, MatchingSpace};
use crate::error::Result;
use crate::geometry::BBox;
use crate::losses::{
    frame_loss, loss_gradients, pld_loss_gradients, pld_weighted_loss, LossBreakdown, LossWeights,
    PredictionGrad,
};
use crate::pld::{pld_match, PseudoLabel};
use crate::tgd::GroupLayout;
use crate::world::GtLabel;

/// `[stage][query] -> (box, suppressed score)`.
pub type StagePreds = Vec<Vec<(BBox, f64)>>;

/// Frozen matchings of one frame; predictions vary, matchings do not.
#[derive(Debug, Clone)]
pub struct FrameSupervision {
    /// Base matching per stage, over real queries.
    pub stage_base: Vec<Matching>,
    /// Pseudo-label matching per stage with the kept pseudo indices.
    pub stage_pld: Option<Vec<(Matching, Vec<usize>)>>,
    /// Matching of augmented copies to their origins' labels (identical at
    /// every stage).
    pub group_matching: Option<Matching>,
    /// Detect-query part of the final-stage matching (feeds spawning).
    pub final_detect: Matching,
    pub label_boxes: Vec<BBox>,
    pub pseudo: Vec<PseudoLabel>,
    pub objects: usize,
}

/// Flags that shape the supervision.
#[derive(Debug, Clone, Copy)]
pub struct SupervisionFlags {
    pub rfs: bool,
    pub pld: bool,
    pub tgd: bool,
}

/// Build every matching of one frame from the stage predictions.
///
/// `track_sigma[pos]` is the propagated label index of live track `pos`
/// (expanded query index `detect + pos`).
pub fn build_supervision(
    preds: &StagePreds,
    layout: &GroupLayout,
    labels: &[GtLabel],
    free: &[usize],
    track_sigma: &[Option<usize>],
    pseudo_frame: &[PseudoLabel],
    flags: SupervisionFlags,
    weights: &LossWeights,
) -> Result<FrameSupervision> {
    let stages = preds.len();
    let real = layout.real();
    let label_boxes: Vec<BBox> = labels.iter().map(|l| l.bbox).collect();
    let is_detect: Vec<bool> = (0..real).map(|i| i < layout.detect).collect();
    let free_indexed: Vec<(usize, BBox)> = free.iter().map(|&i| (i, label_boxes[i])).collect();
    let all_indexed: Vec<(usize, BBox)> = label_boxes.iter().copied().enumerate().collect();
    let sigma_pairs: Vec<(usize, usize)> = track_sigma
        .iter()
        .enumerate()
        .filter_map(|(pos, lab)| lab.map(|l| (layout.detect + pos, l)))
        .collect();

    let mut stage_base = Vec::with_capacity(stages);
    let mut final_detect = Matching::empty(real);
    for l in 0..stages {
        let real_preds = &preds[l][..real];
        if flags.rfs && l + 1 < stages {
            stage_base.push(match_in_space(
                MatchingSpace::AllQueries,
                real_preds,
                &is_detect,
                &all_indexed,
                weights,
            )?);
        } else {
            let detect_match = match_in_space(
                MatchingSpace::DetectOnly,
                real_preds,
                &is_detect,
                &free_indexed,
                weights,
            )?;
            let mut pairs = detect_match.pairs.clone();
            pairs.extend_from_slice(&sigma_pairs);
            if l + 1 == stages {
                final_detect = detect_match;
            }
            stage_base.push(Matching::from_pairs(pairs, real, labels.len()));
        }
    }

    let stage_pld = if flags.pld {
        let mut per_stage = Vec::with_capacity(stages);
        for l in 0..stages {
            let m = pld_match(&preds[l][..real], pseudo_frame, weights)?;
            per_stage.push((m.matching, m.kept));
        }
        Some(per_stage)
    } else {
        None
    };

    let group_matching = if flags.tgd && layout.groups > 1 {
        let mut pairs = Vec::new();
        for g in 1..layout.groups {
            for (pos, lab) in track_sigma.iter().enumerate() {
                if let Some(l) = lab {
                    pairs.push((real + (g - 1) * layout.tracks + pos, *l));
                }
            }
        }
        // Unmatched copies take background; from_pairs would also count the
        // real block, so assemble by hand.
        let mut matched = vec![false; layout.total()];
        for &(q, _) in &pairs {
            matched[q] = true;
        }
        let unmatched: Vec<usize> = (real..layout.total()).filter(|&q| !matched[q]).collect();
        pairs.sort_unstable();
        Some(Matching {
            pairs,
            unmatched_queries: unmatched,
            unmatched_labels: Vec::new(),
        })
    } else {
        None
    };

    Ok(FrameSupervision {
        stage_base,
        stage_pld,
        group_matching,
        final_detect,
        label_boxes,
        pseudo: pseudo_frame.to_vec(),
        objects: labels.len(),
    })
}

impl FrameSupervision {
    fn kept_pseudo(&self, kept: &[usize]) -> Vec<(BBox, f64)> {
        kept.iter()
            .map(|&i| (self.pseudo[i].bbox, self.pseudo[i].confidence))
            .collect()
    }

    /// Evaluate the three components on (possibly recomputed) predictions.
    pub fn losses(
        &self,
        preds: &StagePreds,
        weights: &LossWeights,
    ) -> Result<[LossBreakdown; 3]> {
        let mut base = LossBreakdown::default();
        let mut pld = LossBreakdown::default();
        let mut tgd = LossBreakdown::default();
        for (l, matching) in self.stage_base.iter().enumerate() {
            let b = frame_loss(matching, &preds[l], &self.label_boxes, weights)?;
            base = add(base, b);
            if let Some(stage_pld) = &self.stage_pld {
                let (m, kept) = &stage_pld[l];
                let p = pld_weighted_loss(m, &preds[l], &self.kept_pseudo(kept), weights)?;
                pld = add(pld, p);
            }
            if let Some(gm) = &self.group_matching {
                let g = frame_loss(gm, &preds[l], &self.label_boxes, weights)?;
                tgd = add(tgd, g);
            }
        }
        Ok([base, pld, tgd])
    }

    /// Per-stage, per-query gradients of the summed components.
    pub fn gradients(
        &self,
        preds: &StagePreds,
        weights: &LossWeights,
    ) -> Result<Vec<Vec<PredictionGrad>>> {
        let mut out = Vec::with_capacity(self.stage_base.len());
        for (l, matching) in self.stage_base.iter().enumerate() {
            let mut acc = loss_gradients(matching, &preds[l], &self.label_boxes, weights)?;
            if let Some(stage_pld) = &self.stage_pld {
                let (m, kept) = &stage_pld[l];
                let g = pld_loss_gradients(m, &preds[l], &self.kept_pseudo(kept), weights)?;
                for (a, b) in acc.iter_mut().zip(g) {
                    merge(a, b);
                }
            }
            if let Some(gm) = &self.group_matching {
                let g = loss_gradients(gm, &preds[l], &self.label_boxes, weights)?;
                for (a, b) in acc.iter_mut().zip(g) {
                    merge(a, b);
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// The frame's contribution to the clip loss.
    pub fn frame_total(&self, preds: &StagePreds, weights: &LossWeights) -> Result<f64> {
        if self.objects == 0 {
            return Ok(0.0);
        }
        let [b, p, g] = self.losses(preds, weights)?;
        Ok((b.total + p.total + g.total) / self.objects as f64)
    }
}

fn add(a: LossBreakdown, b: LossBreakdown) -> LossBreakdown {
    LossBreakdown {
        cls: a.cls + b.cls,
        l1: a.l1 + b.l1,
        giou: a.giou + b.giou,
        total: a.total + b.total,
    }
}

fn merge(a: &mut PredictionGrad, b: PredictionGrad) {
    for k in 0..4 {
        a.bbox[k] += b.bbox[k];
    }
    a.logit += b.logit;
}
