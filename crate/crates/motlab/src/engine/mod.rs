//! The toy differentiable query model and its training loop.
//!
//! Each query slot owns, per refinement stage, a box residual and a score
//! logit. Stage boxes accumulate residuals on top of the slot's reference
//! box; stage scores pass through a masked score-suppression interaction.
//! That is the smallest structure in which per-stage matchings differ, the
//! attention mask has an observable effect, and every gradient is closed
//! form.

mod infer;
mod log;
mod model;
mod supervise;
mod train;

pub use infer::{outputs_to_frames, run_inference, TrackOutput};
pub use log::{
    read_log, read_log_file, write_log, FrameRecord, IterationRecord, LabelRoleRecord, PldEntry,
};
pub use model::{
    forward, predictions_with_frozen_interference, Forward, QueryInput, QueryOrigin,
    StagePrediction,
};
pub use supervise::{build_supervision, FrameSupervision, StagePreds};
pub use train::{evaluate_single_frame, run_training, TrainOutput};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::losses::LossWeights;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Logit of the score every track slot starts with (probability 0.6).
pub const TRACK_INIT_LOGIT: f64 = 0.405_465_108_108_164_4;

/// Smallest box side the model will decode.
pub const MIN_SIZE: f64 = 1e-3;

/// Full training configuration. Defaults mirror the standard recipe:
/// clips of 5 frames sampled at intervals 1..10, loss weights (2, 5, 2),
/// spawn threshold 0.5, 4 track-query groups, pseudo-label threshold 0.05.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Detect query count M.
    pub detect_queries: usize,
    /// Track group count G, counting the original group.
    pub track_groups: usize,
    /// Refinement stage count L (at least 2).
    pub stages: usize,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Clip length T.
    pub clip_len: usize,
    pub interval_min: usize,
    pub interval_max: usize,
    pub spawn_threshold: f64,
    pub miss_tolerance: u32,
    pub pseudo_threshold: f64,
    pub scale_range: (f64, f64),
    /// Score-suppression strength beta.
    pub suppression: f64,
    pub enable_rfs: bool,
    pub enable_pld: bool,
    pub enable_tgd: bool,
    pub mask_literal: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            detect_queries: 12,
            track_groups: 4,
            stages: 3,
            weights: LossWeights::default(),
            learning_rate: 0.02,
            epochs: 10,
            clip_len: 5,
            interval_min: 1,
            interval_max: 10,
            spawn_threshold: 0.5,
            miss_tolerance: 5,
            pseudo_threshold: 0.05,
            scale_range: (0.7, 1.3),
            suppression: 2.5,
            enable_rfs: false,
            enable_pld: false,
            enable_tgd: false,
            mask_literal: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.detect_queries == 0 {
            return Err(Error::Config("detect_queries must be positive".into()));
        }
        if self.track_groups == 0 {
            return Err(Error::Config("track_groups must be at least 1".into()));
        }
        if self.stages < 2 {
            return Err(Error::Config("stages must be at least 2".into()));
        }
        if self.clip_len == 0 {
            return Err(Error::Config("clip_len must be at least 1".into()));
        }
        if self.interval_min == 0 || self.interval_min > self.interval_max {
            return Err(Error::Config(
                "interval range must satisfy 1 <= min <= max".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.spawn_threshold)
            || !(0.0..=1.0).contains(&self.pseudo_threshold)
        {
            return Err(Error::Config("thresholds must be in [0, 1]".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::Config("scale_range must satisfy 0 < lo <= hi".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.suppression < 0.0 {
            return Err(Error::Config("suppression must be >= 0".into()));
        }
        Ok(())
    }
}

/// Residual and logit of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageParams {
    pub delta: [f64; 4],
    pub logit: f64,
}

/// Per-stage parameter block of one slot. Also used as the matching
/// gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotParams {
    pub stages: Vec<StageParams>,
}

impl SlotParams {
    pub fn zeros(stages: usize) -> Self {
        SlotParams {
            stages: vec![StageParams::default(); stages],
        }
    }

    pub fn track_init(stages: usize) -> Self {
        SlotParams {
            stages: vec![
                StageParams {
                    delta: [0.0; 4],
                    logit: TRACK_INIT_LOGIT,
                };
                stages
            ],
        }
    }
}

/// All learnable state. Detect slots persist across iterations; track slots
/// live exactly as long as their lifecycle slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Detect reference boxes (fixed anchors).
    pub anchors: Vec<BBox>,
    pub detect: Vec<SlotParams>,
    /// Live track slot parameters, keyed by slot id.
    pub tracks: BTreeMap<u64, SlotParams>,
}

impl ModelParams {
    /// Fresh parameters: anchors on a jittered grid, detect logits jittered
    /// just below the track-init confidence, residuals zero.
    ///
    /// Starting detect scores under the track-init score lets a spawned
    /// track immediately outrank (and so suppress) the detect query sitting
    /// on its target; the jitter breaks score ties between anchors. Grid
    /// placement keeps the anchors from overlapping at the start, so the
    /// interaction only gates queries that training has actually piled up.
    pub fn init(cfg: &TrainConfig) -> ModelParams {
        let m = cfg.detect_queries;
        let side = (m as f64).sqrt().ceil() as usize;
        let mut anchors = Vec::with_capacity(m);
        let mut detect = Vec::with_capacity(m);
        for i in 0..m {
            let mut rng = rng::stream(cfg.seed, "anchors", i as u64);
            let (row, col) = (i / side, i % side);
            let cell = 1.0 / side as f64;
            let w = rng.gen_range(0.18..0.24);
            let h = rng.gen_range(0.18..0.24);
            let jitter = cell * 0.1;
            let cx = (col as f64 + 0.5) * cell + rng.gen_range(-jitter..jitter);
            let cy = (row as f64 + 0.5) * cell + rng.gen_range(-jitter..jitter);
            anchors.push(crate::geometry::clamp_to_arena(BBox::new(
                cx.clamp(w / 2.0, 1.0 - w / 2.0),
                cy.clamp(h / 2.0, 1.0 - h / 2.0),
                w,
                h,
            )));
            let logit = rng.gen_range(0.15..0.30);
            let mut slot = SlotParams::zeros(cfg.stages);
            for s in &mut slot.stages {
                s.logit = logit;
            }
            detect.push(slot);
        }
        ModelParams {
            anchors,
            detect,
            tracks: BTreeMap::new(),
        }
    }

    pub fn stages(&self) -> usize {
        self.detect.first().map(|s| s.stages.len()).unwrap_or(0)
    }
}

/// Plain gradient descent on one slot: `theta <- theta - lr * g`.
pub fn optimizer_step(params: &mut SlotParams, grads: &SlotParams, lr: f64) -> Result<()> {
    if params.stages.len() != grads.stages.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter stages vs {} gradient stages",
            params.stages.len(),
            grads.stages.len()
        )));
    }
    for (p, g) in params.stages.iter_mut().zip(&grads.stages) {
        if !g.logit.is_finite() || g.delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        for k in 0..4 {
            p.delta[k] -= lr * g.delta[k];
        }
        p.logit -= lr * g.logit;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_recipe() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.clip_len, 5);
        assert_eq!(cfg.interval_min, 1);
        assert_eq!(cfg.interval_max, 10);
        assert_eq!(
            cfg.weights,
            LossWeights {
                cls: 2.0,
                l1: 5.0,
                giou: 2.0
            }
        );
        assert_eq!(cfg.spawn_threshold, 0.5);
        assert_eq!(cfg.track_groups, 4);
        assert_eq!(cfg.pseudo_threshold, 0.05);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = TrainConfig::default();
        cfg.stages = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.interval_min = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.scale_range = (0.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn optimizer_step_cases() {
        let mut p = SlotParams::track_init(2);
        let zero = SlotParams::zeros(2);
        let before = p.clone();
        optimizer_step(&mut p, &zero, 0.5).unwrap();
        assert_eq!(p, before);

        let mut g = SlotParams::zeros(2);
        g.stages[0].delta = [1.0, -1.0, 0.0, 2.0];
        g.stages[0].logit = 0.5;
        optimizer_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, before);

        optimizer_step(&mut p, &g, 0.1).unwrap();
        assert!((p.stages[0].delta[0] + 0.1).abs() < 1e-12);
        assert!((p.stages[0].delta[1] - 0.1).abs() < 1e-12);
        assert!((p.stages[0].logit - (TRACK_INIT_LOGIT - 0.05)).abs() < 1e-12);

        g.stages[1].logit = f64::NAN;
        assert!(matches!(
            optimizer_step(&mut p, &g, 0.1),
            Err(Error::NonFiniteGradient)
        ));
    }

    /// One step against an L1 pull moves each residual component by
    /// `lr * lambda_l1` in the sign direction.
    #[test]
    fn single_l1_pull_moves_by_sign() {
        use crate::assignment::Matching;
        use crate::losses::loss_gradients;
        let pred = BBox::new(0.6, 0.5, 0.2, 0.2);
        let label = BBox::new(0.5, 0.5, 0.2, 0.2);
        let w = LossWeights {
            cls: 0.0,
            l1: 5.0,
            giou: 0.0,
        };
        let m = Matching::from_pairs(vec![(0, 0)], 1, 1);
        let g = loss_gradients(&m, &[(pred, 0.5)], &[label], &w).unwrap();
        let mut slot = SlotParams::zeros(1);
        let grad = SlotParams {
            stages: vec![StageParams {
                delta: g[0].bbox,
                logit: g[0].logit,
            }],
        };
        optimizer_step(&mut slot, &grad, 0.01).unwrap();
        assert!((slot.stages[0].delta[0] + 0.05).abs() < 1e-12);
        assert_eq!(slot.stages[0].delta[1], 0.0);
    }

    #[test]
    fn anchors_are_seeded_and_in_bounds() {
        let cfg = TrainConfig::default();
        let a = ModelParams::init(&cfg);
        let b = ModelParams::init(&cfg);
        assert_eq!(a, b);
        for anchor in &a.anchors {
            let c = crate::geometry::to_corners(*anchor);
            assert!(c.x1 > 0.0 && c.x2 < 1.0 && c.y1 > 0.0 && c.y2 < 1.0);
        }
        let mut cfg2 = cfg.clone();
        cfg2.seed = 1;
        assert_ne!(ModelParams::init(&cfg2), a);
    }
}
