//! Forward pass of the toy query model: cumulative box refinement and the
//! masked score-suppression interaction.

use super::{SlotParams, MIN_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::tgd::AttentionMask;

/// Where an expanded query's parameters live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryOrigin {
    Detect(usize),
    Track(u64),
    /// A denoising copy of a track slot; gradients flow back to the slot.
    Augmented { group: usize, slot: u64 },
}

/// One expanded query: a reference box plus its (possibly copied) parameter
/// block.
#[derive(Debug, Clone)]
pub struct QueryInput {
    pub ref_box: BBox,
    pub params: SlotParams,
    pub origin: QueryOrigin,
}

/// 2x2 Jacobian of one decoded axis (center, size) with respect to the raw
/// (center, size).
#[derive(Debug, Clone, Copy, Default)]
pub struct AxisJac {
    pub dc_dc: f64,
    pub dc_ds: f64,
    pub ds_dc: f64,
    pub ds_ds: f64,
}

/// Decode one axis: enforce the minimum size, clip the interval into [0, 1],
/// re-encode, and report the piecewise derivative. In-bounds inputs pass
/// through unchanged.
fn decode_axis(c: f64, s_raw: f64) -> (f64, f64, AxisJac) {
    let pass = s_raw > MIN_SIZE;
    let s0 = if pass { s_raw } else { MIN_SIZE };
    let x1 = c - s0 / 2.0;
    let x2 = c + s0 / 2.0;
    if pass && x1 > 0.0 && x2 < 1.0 {
        return (
            c,
            s_raw,
            AxisJac {
                dc_dc: 1.0,
                dc_ds: 0.0,
                ds_dc: 0.0,
                ds_ds: 1.0,
            },
        );
    }
    let a = if x1 > 0.0 && x1 < 1.0 { 1.0 } else { 0.0 };
    let b = if x2 > 0.0 && x2 < 1.0 { 1.0 } else { 0.0 };
    let x1c = x1.clamp(0.0, 1.0);
    let x2c = x2.clamp(0.0, 1.0);
    let mut c_out = (x1c + x2c) / 2.0;
    let mut s_out = x2c - x1c;
    let mut jac = AxisJac {
        dc_dc: (a + b) / 2.0,
        dc_ds: (b - a) / 4.0,
        ds_dc: b - a,
        ds_ds: (a + b) / 2.0,
    };
    if !pass {
        jac.dc_ds = 0.0;
        jac.ds_ds = 0.0;
    }
    if s_out < MIN_SIZE / 2.0 {
        // Interval collapsed against a wall: pin a minimal box there.
        c_out = c_out.clamp(MIN_SIZE / 2.0, 1.0 - MIN_SIZE / 2.0);
        s_out = MIN_SIZE;
        jac = AxisJac::default();
    }
    (c_out, s_out, jac)
}

pub(super) fn decode_box(raw: [f64; 4]) -> (BBox, [AxisJac; 2]) {
    let (cx, w, jx) = decode_axis(raw[0], raw[2]);
    let (cy, h, jy) = decode_axis(raw[1], raw[3]);
    (BBox::new(cx, cy, w, h), [jx, jy])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Predictions of one refinement stage.
#[derive(Debug, Clone)]
pub struct StagePrediction {
    pub boxes: Vec<BBox>,
    /// Raw score `sigmoid(logit)`.
    pub raw: Vec<f64>,
    /// Suppressed score `sigmoid(logit - beta * interference)`.
    pub suppressed: Vec<f64>,
    /// Max IoU with any visible higher-raw-scored query; 0 when none.
    pub interference: Vec<f64>,
    pub(super) jac: Vec<[AxisJac; 2]>,
}

/// Full forward output across stages.
#[derive(Debug, Clone)]
pub struct Forward {
    pub stages: Vec<StagePrediction>,
}

impl Forward {
    /// `(box, suppressed score)` view used by matching and losses.
    pub fn stage_preds(&self) -> Vec<Vec<(BBox, f64)>> {
        self.stages
            .iter()
            .map(|s| {
                s.boxes
                    .iter()
                    .zip(&s.suppressed)
                    .map(|(&b, &p)| (b, p))
                    .collect()
            })
            .collect()
    }
}

/// Run the model over all expanded queries.
///
/// For query `i`, the stage-`l` box accumulates its residuals onto the
/// reference box and the suppressed score subtracts `beta` times the largest
/// IoU with a visible, strictly higher-raw-scored query. The interference
/// term is a constant in backward (stop-gradient).
pub fn forward(queries: &[QueryInput], mask: &AttentionMask, beta: f64) -> Result<Forward> {
    if mask.size() != queries.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask size {} vs {} queries",
            mask.size(),
            queries.len()
        )));
    }
    let stages = queries.first().map(|q| q.params.stages.len()).unwrap_or(0);
    for q in queries {
        if q.params.stages.len() != stages {
            return Err(Error::DimensionMismatch(
                "inconsistent stage counts across queries".into(),
            ));
        }
    }
    let n = queries.len();
    let mut cum = vec![[0.0f64; 4]; n];
    let mut out = Vec::with_capacity(stages);
    for l in 0..stages {
        let mut boxes = Vec::with_capacity(n);
        let mut raw = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        for (i, q) in queries.iter().enumerate() {
            let sp = &q.params.stages[l];
            for k in 0..4 {
                cum[i][k] += sp.delta[k];
            }
            let r = q.ref_box;
            let raw_box = [
                r.cx + cum[i][0],
                r.cy + cum[i][1],
                r.w + cum[i][2],
                r.h + cum[i][3],
            ];
            let (b, j) = decode_box(raw_box);
            boxes.push(b);
            jac.push(j);
            raw.push(sigmoid(sp.logit));
        }
        let mut interference = vec![0.0f64; n];
        for i in 0..n {
            let mut m = 0.0f64;
            for j in 0..n {
                if j != i && !mask.blocked(i, j) && raw[j] > raw[i] {
                    m = m.max(iou_unchecked(boxes[i], boxes[j]));
                }
            }
            interference[i] = m;
        }
        let suppressed: Vec<f64> = (0..n)
            .map(|i| sigmoid(queries[i].params.stages[l].logit - beta * interference[i]))
            .collect();
        out.push(StagePrediction {
            boxes,
            raw,
            suppressed,
            interference,
            jac,
        });
    }
    Ok(Forward { stages: out })
}

/// Recompute `(box, suppressed score)` per stage with the interference terms
/// frozen at given values. This is the function the finite-difference
/// gradient check differentiates: matchings and interference are data, only
/// residuals and logits vary.
pub fn predictions_with_frozen_interference(
    queries: &[QueryInput],
    frozen: &[Vec<f64>],
    beta: f64,
) -> Vec<Vec<(BBox, f64)>> {
    let stages = queries.first().map(|q| q.params.stages.len()).unwrap_or(0);
    let n = queries.len();
    let mut cum = vec![[0.0f64; 4]; n];
    let mut out = Vec::with_capacity(stages);
    for l in 0..stages {
        let mut preds = Vec::with_capacity(n);
        for (i, q) in queries.iter().enumerate() {
            let sp = &q.params.stages[l];
            for k in 0..4 {
                cum[i][k] += sp.delta[k];
            }
            let r = q.ref_box;
            let (b, _) = decode_box([
                r.cx + cum[i][0],
                r.cy + cum[i][1],
                r.w + cum[i][2],
                r.h + cum[i][3],
            ]);
            preds.push((b, sigmoid(sp.logit - beta * frozen[l][i])));
        }
        out.push(preds);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tgd::{build_attention_mask, GroupLayout};

    fn query(cx: f64, cy: f64, logit: f64, stages: usize) -> QueryInput {
        let mut params = SlotParams::zeros(stages);
        for s in &mut params.stages {
            s.logit = logit;
        }
        QueryInput {
            ref_box: BBox::new(cx, cy, 0.2, 0.2),
            params,
            origin: QueryOrigin::Detect(0),
        }
    }

    #[test]
    fn zero_residuals_keep_reference_boxes() {
        let queries = vec![query(0.3, 0.3, 0.0, 3), query(0.7, 0.7, 0.0, 3)];
        let mask = build_attention_mask(&GroupLayout::new(2, 0, 1));
        let f = forward(&queries, &mask, 1.0).unwrap();
        for stage in &f.stages {
            assert_eq!(stage.boxes[0], queries[0].ref_box);
            assert_eq!(stage.boxes[1], queries[1].ref_box);
        }
    }

    #[test]
    fn zero_beta_disables_suppression() {
        let mut a = query(0.5, 0.5, 0.8, 2);
        let b = query(0.5, 0.5, 0.2, 2);
        a.params.stages[1].delta = [0.01, 0.0, 0.0, 0.0];
        let mask = build_attention_mask(&GroupLayout::new(2, 0, 1));
        let f = forward(&[a, b], &mask, 0.0).unwrap();
        for stage in &f.stages {
            assert_eq!(stage.raw, stage.suppressed);
        }
    }

    #[test]
    fn lower_scored_overlapping_query_is_suppressed() {
        let hi = query(0.5, 0.5, 0.8, 1);
        let lo = query(0.5, 0.5, 0.2, 1);
        let beta = 2.0;

        let mask = build_attention_mask(&GroupLayout::new(2, 0, 1));
        let f = forward(&[hi.clone(), lo.clone()], &mask, beta).unwrap();
        let stage = &f.stages[0];
        assert_eq!(stage.interference[0], 0.0);
        assert!((stage.interference[1] - 1.0).abs() < 1e-12);
        assert!((stage.suppressed[1] - sigmoid(0.2 - beta)).abs() < 1e-12);
        assert_eq!(stage.suppressed[0], stage.raw[0]);

        // With the pair blocked by the mask there is no suppression between
        // the real block and an augmented copy.
        let masked = build_attention_mask(&GroupLayout::new(1, 1, 2));
        // queries: [detect hi, track lo, augmented copy of lo]
        let aug = QueryInput {
            origin: QueryOrigin::Augmented { group: 1, slot: 0 },
            ..lo.clone()
        };
        let f = forward(&[hi, lo, aug], &masked, beta).unwrap();
        let stage = &f.stages[0];
        // The augmented copy sees the real block, so it is suppressed; the
        // real pair interacts as before.
        assert!(stage.suppressed[2] < stage.raw[2]);
        assert!((stage.interference[1] - 1.0).abs() < 1e-12);
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn cumulative_residuals_shift_boxes() {
        let mut q = query(0.4, 0.4, 0.0, 3);
        q.params.stages[0].delta = [0.05, 0.0, 0.0, 0.0];
        q.params.stages[1].delta = [0.05, 0.0, 0.0, 0.0];
        let mask = build_attention_mask(&GroupLayout::new(1, 0, 1));
        let f = forward(&[q], &mask, 0.0).unwrap();
        assert!((f.stages[0].boxes[0].cx - 0.45).abs() < 1e-12);
        assert!((f.stages[1].boxes[0].cx - 0.5).abs() < 1e-12);
        assert!((f.stages[2].boxes[0].cx - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_jacobian_matches_finite_differences() {
        use rand::Rng;
        let mut rng = crate::rng::stream(8, "decode-fd", 0);
        let h = 1e-6;
        for _ in 0..500 {
            let raw = [
                rng.gen_range(-0.3..1.3),
                rng.gen_range(-0.3..1.3),
                rng.gen_range(-0.1..0.8),
                rng.gen_range(-0.1..0.8),
            ];
            let (_, jac) = decode_box(raw);
            for &(axis, ci, si) in &[(0usize, 0usize, 2usize), (1, 1, 3)] {
                for &(wrt, idx) in &[("c", ci), ("s", si)] {
                    let mut lo = raw;
                    let mut hi_ = raw;
                    lo[idx] -= h;
                    hi_[idx] += h;
                    let (blo, _) = decode_box(lo);
                    let (bhi, _) = decode_box(hi_);
                    let (dc, ds) = match axis {
                        0 => ((bhi.cx - blo.cx) / (2.0 * h), (bhi.w - blo.w) / (2.0 * h)),
                        _ => ((bhi.cy - blo.cy) / (2.0 * h), (bhi.h - blo.h) / (2.0 * h)),
                    };
                    let (adc, ads) = match wrt {
                        "c" => (jac[axis].dc_dc, jac[axis].ds_dc),
                        _ => (jac[axis].dc_ds, jac[axis].ds_ds),
                    };
                    // Skip the measure-zero straddles of a kink.
                    if (adc - dc).abs() > 1e-4 || (ads - ds).abs() > 1e-4 {
                        let near_kink = [lo, hi_].iter().any(|r| {
                            let s0 = r[si].max(MIN_SIZE);
                            let x1 = r[ci] - s0 / 2.0;
                            let x2 = r[ci] + s0 / 2.0;
                            let s_out = x2.clamp(0.0, 1.0) - x1.clamp(0.0, 1.0);
                            [
                                x1,
                                x2,
                                x1 - 1.0,
                                x2 - 1.0,
                                r[si] - MIN_SIZE,
                                s_out - MIN_SIZE / 2.0,
                            ]
                            .iter()
                            .any(|v| v.abs() < 4.0 * h)
                        });
                        assert!(
                            near_kink,
                            "raw {raw:?} axis {axis} wrt {wrt}: analytic ({adc},{ads}) vs fd ({dc},{ds})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mask_dimension_mismatch_is_an_error() {
        let queries = vec![query(0.3, 0.3, 0.0, 2)];
        let mask = build_attention_mask(&GroupLayout::new(2, 0, 1));
        assert!(matches!(
            forward(&queries, &mask, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
