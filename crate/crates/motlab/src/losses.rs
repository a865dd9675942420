//! Classification and regression losses, confidence reweighting, clip-level
//! aggregation, and their closed-form gradients.

use crate::assignment::Matching;
use crate::error::{Error, Result};
use crate::geometry::{giou, giou_grad, l1_box_distance, l1_box_grad, BBox};
use serde::{Deserialize, Serialize};

/// Positive-class balance of the focal loss.
pub const FOCAL_ALPHA: f64 = 0.25;
/// Focusing exponent of the focal loss.
pub const FOCAL_GAMMA: f64 = 2.0;
/// Scores are clamped into `(SCORE_EPS, 1 - SCORE_EPS)` before any log.
pub const SCORE_EPS: f64 = 1e-7;
/// Background weight of the pseudo-label loss.
pub const PLD_BACKGROUND_WEIGHT: f64 = 0.5;

/// Per-term weights of the frame loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cls: 2.0,
            l1: 5.0,
            giou: 2.0,
        }
    }
}

/// Accumulated loss terms; `total` carries the weights, the component sums
/// do not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, weights: &LossWeights, cls: f64, l1: f64, giou_term: f64) {
        self.cls += cls;
        self.l1 += l1;
        self.giou += giou_term;
        self.total += weights.cls * cls + weights.l1 * l1 + weights.giou * giou_term;
    }
}

/// Focal loss of a probability against a binary target.
pub fn focal_loss(p: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    if target {
        -alpha * (1.0 - p).powf(gamma) * p.ln()
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
    }
}

/// d focal / d p, zero where the clamp is active.
fn focal_grad(p: f64, target: bool, alpha: f64, gamma: f64) -> f64 {
    if p <= SCORE_EPS || p >= 1.0 - SCORE_EPS {
        return 0.0;
    }
    if target {
        alpha * (gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() - (1.0 - p).powf(gamma) / p)
    } else {
        (1.0 - alpha) * (p.powf(gamma) / (1.0 - p) - gamma * p.powf(gamma - 1.0) * (1.0 - p).ln())
    }
}

fn check_matching(matching: &Matching, queries: usize, targets: usize) -> Result<()> {
    for &(q, l) in &matching.pairs {
        if q >= queries || l >= targets {
            return Err(Error::MatchingIndexOutOfRange { query: q, label: l });
        }
    }
    for &q in &matching.unmatched_queries {
        if q >= queries {
            return Err(Error::MatchingIndexOutOfRange {
                query: q,
                label: usize::MAX,
            });
        }
    }
    Ok(())
}

/// Shared kernel: matched queries take the full loss against their target
/// scaled by the pair weight; unmatched queries take the background focal
/// term scaled by `background_weight`.
pub fn weighted_frame_loss(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    targets: &[BBox],
    pair_weights: &[f64],
    background_weight: f64,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_matching(matching, predictions.len(), targets.len())?;
    let mut out = LossBreakdown::default();
    for (k, &(q, l)) in matching.pairs.iter().enumerate() {
        let w = pair_weights[k];
        let (pred, score) = predictions[q];
        let cls = w * focal_loss(score, true, FOCAL_ALPHA, FOCAL_GAMMA);
        let l1 = w * l1_box_distance(pred, targets[l]);
        let g = w * (1.0 - giou(pred, targets[l])?);
        out.accumulate(weights, cls, l1, g);
    }
    for &q in &matching.unmatched_queries {
        let (_, score) = predictions[q];
        let cls = background_weight * focal_loss(score, false, FOCAL_ALPHA, FOCAL_GAMMA);
        out.accumulate(weights, cls, 0.0, 0.0);
    }
    Ok(out)
}

/// Frame loss: matched queries against their labels, unmatched queries
/// against background.
pub fn frame_loss(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    labels: &[BBox],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let pair_weights = vec![1.0; matching.pairs.len()];
    weighted_frame_loss(matching, predictions, labels, &pair_weights, 1.0, weights)
}

/// Pseudo-label loss: each matched pair is reweighted by the pseudo label's
/// confidence, unmatched queries by the fixed background factor 0.5.
pub fn pld_weighted_loss(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    pseudo_labels: &[(BBox, f64)],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let boxes: Vec<BBox> = pseudo_labels.iter().map(|&(b, _)| b).collect();
    let mut pair_weights = Vec::with_capacity(matching.pairs.len());
    for &(_, l) in &matching.pairs {
        let c_e = pseudo_labels
            .get(l)
            .ok_or(Error::MatchingIndexOutOfRange {
                query: usize::MAX,
                label: l,
            })?
            .1;
        if !(0.0..=1.0).contains(&c_e) {
            return Err(Error::ConfidenceOutOfRange(c_e));
        }
        pair_weights.push(c_e);
    }
    weighted_frame_loss(
        matching,
        predictions,
        &boxes,
        &pair_weights,
        PLD_BACKGROUND_WEIGHT,
        weights,
    )
}

/// Clip loss: per-frame strategy losses summed and divided by the frame's
/// object count. Frames with zero objects contribute nothing.
pub fn clip_loss(frames: &[(LossBreakdown, LossBreakdown, LossBreakdown, usize)]) -> f64 {
    frames
        .iter()
        .filter(|&&(_, _, _, o)| o > 0)
        .map(|&(r, p, g, o)| (r.total + p.total + g.total) / o as f64)
        .sum()
}

/// Gradient of the frame loss with respect to one query's box components
/// and score logit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PredictionGrad {
    pub bbox: [f64; 4],
    pub logit: f64,
}

impl PredictionGrad {
    pub fn is_finite(&self) -> bool {
        self.bbox.iter().all(|v| v.is_finite()) && self.logit.is_finite()
    }
}

/// Gradients of [`weighted_frame_loss`] for every query.
///
/// Box gradients are with respect to the prediction's `(cx, cy, w, h)`;
/// logit gradients already include the sigmoid factor `p (1 - p)`.
pub fn weighted_loss_gradients(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    targets: &[BBox],
    pair_weights: &[f64],
    background_weight: f64,
    weights: &LossWeights,
) -> Result<Vec<PredictionGrad>> {
    check_matching(matching, predictions.len(), targets.len())?;
    let mut grads = vec![PredictionGrad::default(); predictions.len()];
    for (k, &(q, l)) in matching.pairs.iter().enumerate() {
        let w = pair_weights[k];
        let (pred, score) = predictions[q];
        let dsig = score * (1.0 - score);
        grads[q].logit =
            weights.cls * w * focal_grad(score, true, FOCAL_ALPHA, FOCAL_GAMMA) * dsig;
        let l1g = l1_box_grad(pred, targets[l]);
        let gg = giou_grad(pred, targets[l])?;
        for i in 0..4 {
            grads[q].bbox[i] = w * (weights.l1 * l1g[i] - weights.giou * gg[i]);
        }
    }
    for &q in &matching.unmatched_queries {
        let (_, score) = predictions[q];
        let dsig = score * (1.0 - score);
        grads[q].logit = weights.cls
            * background_weight
            * focal_grad(score, false, FOCAL_ALPHA, FOCAL_GAMMA)
            * dsig;
    }
    Ok(grads)
}

/// Gradients of [`frame_loss`].
pub fn loss_gradients(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    labels: &[BBox],
    weights: &LossWeights,
) -> Result<Vec<PredictionGrad>> {
    let pair_weights = vec![1.0; matching.pairs.len()];
    weighted_loss_gradients(matching, predictions, labels, &pair_weights, 1.0, weights)
}

/// Gradients of [`pld_weighted_loss`].
pub fn pld_loss_gradients(
    matching: &Matching,
    predictions: &[(BBox, f64)],
    pseudo_labels: &[(BBox, f64)],
    weights: &LossWeights,
) -> Result<Vec<PredictionGrad>> {
    let boxes: Vec<BBox> = pseudo_labels.iter().map(|&(b, _)| b).collect();
    let pair_weights: Vec<f64> = matching
        .pairs
        .iter()
        .map(|&(_, l)| pseudo_labels[l].1)
        .collect();
    weighted_loss_gradients(
        matching,
        predictions,
        &boxes,
        &pair_weights,
        PLD_BACKGROUND_WEIGHT,
        weights,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} != {b}");
    }

    #[test]
    fn focal_examples() {
        approx(focal_loss(1.0, true, 0.25, 2.0), 0.0, 1e-5);
        approx(focal_loss(0.5, true, 0.25, 2.0), 0.25 * 0.25 * LN2, 1e-12);
        approx(focal_loss(0.5, false, 0.25, 2.0), 0.75 * 0.25 * LN2, 1e-12);
        approx(focal_loss(0.5, true, 0.25, 2.0), 0.04332, 1e-4);
        approx(focal_loss(0.5, false, 0.25, 2.0), 0.12997, 1e-4);
    }

    fn single_pair_matching() -> Matching {
        Matching::from_pairs(vec![(0, 0)], 1, 1)
    }

    #[test]
    fn frame_loss_perfect_predictions_vanish() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = single_pair_matching();
        let out = frame_loss(&m, &[(b, 1.0)], &[b], &LossWeights::default()).unwrap();
        assert!(out.total < 1e-5);
    }

    #[test]
    fn frame_loss_single_unmatched_background() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = Matching::empty(1);
        let out = frame_loss(&m, &[(b, 0.5)], &[], &LossWeights::default()).unwrap();
        approx(out.total, 2.0 * 0.75 * 0.25 * LN2, 1e-12);
        approx(out.total, 0.2599, 1e-3);
    }

    #[test]
    fn frame_loss_single_matched_identical_boxes() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = single_pair_matching();
        let out = frame_loss(&m, &[(b, 0.5)], &[b], &LossWeights::default()).unwrap();
        approx(out.total, 2.0 * 0.25 * 0.25 * LN2, 1e-12);
        approx(out.total, 0.08664, 1e-4);
    }

    #[test]
    fn frame_loss_index_out_of_range() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = Matching {
            pairs: vec![(0, 3)],
            unmatched_queries: vec![],
            unmatched_labels: vec![],
        };
        let err = frame_loss(&m, &[(b, 0.5)], &[b], &LossWeights::default()).unwrap_err();
        assert!(matches!(err, Error::MatchingIndexOutOfRange { .. }));
    }

    #[test]
    fn pld_weights_matched_and_background() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let w = LossWeights::default();
        let m = single_pair_matching();
        let base = frame_loss(&m, &[(b, 0.5)], &[b], &w).unwrap();
        let weighted = pld_weighted_loss(&m, &[(b, 0.5)], &[(b, 0.9)], &w).unwrap();
        approx(weighted.total, 0.9 * base.total, 1e-12);

        // c_e = 1 is exactly neutral on matched pairs.
        let neutral = pld_weighted_loss(&m, &[(b, 0.5)], &[(b, 1.0)], &w).unwrap();
        approx(neutral.total, base.total, 1e-15);

        // Background entries carry the 0.5 factor.
        let mu = Matching::empty(1);
        let bg = pld_weighted_loss(&mu, &[(b, 0.5)], &[], &w).unwrap();
        let bg_base = frame_loss(&mu, &[(b, 0.5)], &[], &w).unwrap();
        approx(bg.total, 0.5 * bg_base.total, 1e-15);
    }

    #[test]
    fn pld_rejects_bad_confidence() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = single_pair_matching();
        let err =
            pld_weighted_loss(&m, &[(b, 0.5)], &[(b, 1.5)], &LossWeights::default()).unwrap_err();
        assert!(matches!(err, Error::ConfidenceOutOfRange(_)));
    }

    /// With all pair weights 1 and the background weight overridden to 1 the
    /// reweighted kernel degenerates to the plain frame loss.
    #[test]
    fn reweighting_identity_degeneration() {
        let w = LossWeights::default();
        let preds = vec![
            (BBox::new(0.3, 0.3, 0.2, 0.2), 0.7),
            (BBox::new(0.6, 0.6, 0.25, 0.2), 0.4),
            (BBox::new(0.8, 0.2, 0.1, 0.15), 0.2),
        ];
        let labels = vec![BBox::new(0.31, 0.3, 0.22, 0.2), BBox::new(0.61, 0.58, 0.25, 0.2)];
        let m = Matching::from_pairs(vec![(0, 0), (1, 1)], 3, 2);
        let a = frame_loss(&m, &preds, &labels, &w).unwrap();
        let b = weighted_frame_loss(&m, &preds, &labels, &[1.0, 1.0], 1.0, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clip_loss_examples() {
        let mk = |t: f64| LossBreakdown {
            total: t,
            ..Default::default()
        };
        approx(clip_loss(&[(mk(1.0), mk(0.5), mk(0.5), 2)]), 1.0, 1e-12);
        approx(clip_loss(&[(mk(0.0), mk(0.0), mk(0.0), 3)]), 0.0, 1e-12);
        approx(
            clip_loss(&[
                (mk(2.0), mk(0.0), mk(0.0), 1),
                (mk(3.0), mk(0.0), mk(0.0), 3),
            ]),
            3.0,
            1e-12,
        );
        // Empty frames are skipped, not divided by zero.
        approx(clip_loss(&[(mk(5.0), mk(0.0), mk(0.0), 0)]), 0.0, 1e-12);
    }

    #[test]
    fn clip_loss_frame_permutation_invariant() {
        let mk = |t: f64| LossBreakdown {
            total: t,
            ..Default::default()
        };
        let a = vec![
            (mk(2.0), mk(1.0), mk(0.5), 2),
            (mk(1.0), mk(0.0), mk(0.0), 1),
        ];
        let b = vec![a[1], a[0]];
        approx(clip_loss(&a), clip_loss(&b), 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_perfect_prediction() {
        let b = BBox::new(0.4, 0.4, 0.2, 0.3);
        let m = single_pair_matching();
        let g = loss_gradients(&m, &[(b, 1.0 - 1e-9)], &[b], &LossWeights::default()).unwrap();
        assert_eq!(g[0].logit, 0.0);
        assert_eq!(g[0].bbox, [0.0; 4]);
    }

    #[test]
    fn l1_sign_rule_on_center() {
        let pred = BBox::new(0.6, 0.5, 0.2, 0.2);
        let label = BBox::new(0.5, 0.5, 0.2, 0.2);
        let m = single_pair_matching();
        let w = LossWeights {
            cls: 0.0,
            l1: 5.0,
            giou: 0.0,
        };
        let g = loss_gradients(&m, &[(pred, 0.5)], &[label], &w).unwrap();
        approx(g[0].bbox[0], 5.0, 1e-12);
    }

    /// Central finite differences over 200 random configurations covering
    /// matched and unmatched queries and all three loss terms.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng::stream(3, "loss-fd", 0);
        let w = LossWeights::default();
        let h = 1e-5;
        for _ in 0..200 {
            let n_preds = rng.gen_range(1..=4);
            let n_labels = rng.gen_range(0..=n_preds);
            let preds: Vec<(BBox, f64)> = (0..n_preds)
                .map(|_| {
                    (
                        BBox::new(
                            rng.gen_range(0.2..0.8),
                            rng.gen_range(0.2..0.8),
                            rng.gen_range(0.05..0.3),
                            rng.gen_range(0.05..0.3),
                        ),
                        rng.gen_range(0.05..0.95),
                    )
                })
                .collect();
            let labels: Vec<BBox> = (0..n_labels)
                .map(|_| {
                    BBox::new(
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.2..0.8),
                        rng.gen_range(0.05..0.3),
                        rng.gen_range(0.05..0.3),
                    )
                })
                .collect();
            let pairs: Vec<(usize, usize)> = (0..n_labels).map(|l| (l, l)).collect();
            let m = Matching::from_pairs(pairs, n_preds, n_labels);
            let grads = loss_gradients(&m, &preds, &labels, &w).unwrap();

            for q in 0..n_preds {
                // Box components.
                for k in 0..4 {
                    let eval = |delta: f64| {
                        let mut p2 = preds.clone();
                        let mut arr = p2[q].0.as_array();
                        arr[k] += delta;
                        p2[q].0 = BBox::from_array(arr);
                        frame_loss(&m, &p2, &labels, &w).unwrap().total
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let a = grads[q].bbox[k];
                    assert!(
                        (a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1.0),
                        "box[{k}] of query {q}: analytic {a} vs fd {fd}"
                    );
                }
                // Logit.
                let s = (preds[q].1 / (1.0 - preds[q].1)).ln();
                let eval = |delta: f64| {
                    let mut p2 = preds.clone();
                    p2[q].1 = 1.0 / (1.0 + (-(s + delta)).exp());
                    frame_loss(&m, &p2, &labels, &w).unwrap().total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = grads[q].logit;
                assert!(
                    (a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()).max(1.0),
                    "logit of query {q}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn frame_loss_non_negative_random() {
        let mut rng = crate::rng::stream(5, "loss-nonneg", 0);
        for _ in 0..200 {
            let b = BBox::new(
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.05..0.3),
            );
            let label = BBox::new(
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.05..0.3),
            );
            let m = single_pair_matching();
            let out = frame_loss(&m, &[(b, rng.gen_range(0.01..0.99))], &[label], &LossWeights::default()).unwrap();
            assert!(out.total >= 0.0);
        }
    }
}
