//! Inference: run the trained model over a timeline with no labels, no
//! group expansion, and score-driven lifecycle continuity.

use super::model::{forward, QueryInput, QueryOrigin};
use super::{ModelParams, SlotParams, TrainConfig};
use crate::error::Result;
use crate::geometry::BBox;
use crate::tgd::{build_attention_mask, GroupLayout};
use crate::world::{FrameSeq, GtLabel};

/// One emitted box: the slot id is the reported identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub identity: u64,
    pub bbox: BBox,
    pub score: f64,
}

struct InferTrack {
    slot_id: u64,
    ref_box: BBox,
    params: SlotParams,
    miss: u32,
}

/// Run inference for `num_frames` frames.
///
/// Per frame: detect queries and live tracks run forward; live tracks whose
/// final suppressed score clears the spawn threshold are emitted and keep
/// going, others accumulate misses and retire at the tolerance; detect
/// queries above the threshold spawn (and emit) new tracks.
pub fn run_inference(
    params: &ModelParams,
    num_frames: usize,
    cfg: &TrainConfig,
) -> Result<Vec<Vec<TrackOutput>>> {
    cfg.validate()?;
    let m = params.anchors.len();
    let stages = cfg.stages;
    let mut tracks: Vec<InferTrack> = Vec::new();
    let mut next_slot: u64 = 1;
    let mut out = Vec::with_capacity(num_frames);
    for _ in 0..num_frames {
        let mut queries: Vec<QueryInput> = Vec::with_capacity(m + tracks.len());
        for (i, (anchor, slot)) in params.anchors.iter().zip(&params.detect).enumerate() {
            queries.push(QueryInput {
                ref_box: *anchor,
                params: slot.clone(),
                origin: QueryOrigin::Detect(i),
            });
        }
        for t in &tracks {
            queries.push(QueryInput {
                ref_box: t.ref_box,
                params: t.params.clone(),
                origin: QueryOrigin::Track(t.slot_id),
            });
        }
        let layout = GroupLayout::new(m, tracks.len(), 1);
        let mask = build_attention_mask(&layout);
        let fwd = forward(&queries, &mask, cfg.suppression)?;
        let last = &fwd.stages[stages - 1];

        let mut emitted = Vec::new();
        for (pos, track) in tracks.iter_mut().enumerate() {
            let idx = m + pos;
            track.ref_box = last.boxes[idx];
            if last.suppressed[idx] > cfg.spawn_threshold {
                track.miss = 0;
                emitted.push(TrackOutput {
                    identity: track.slot_id,
                    bbox: last.boxes[idx],
                    score: last.suppressed[idx],
                });
            } else {
                track.miss += 1;
            }
        }
        for i in 0..m {
            if last.suppressed[i] > cfg.spawn_threshold {
                let slot_id = next_slot;
                next_slot += 1;
                tracks.push(InferTrack {
                    slot_id,
                    ref_box: last.boxes[i],
                    params: SlotParams::track_init(stages),
                    miss: 0,
                });
                emitted.push(TrackOutput {
                    identity: slot_id,
                    bbox: last.boxes[i],
                    score: last.suppressed[i],
                });
            }
        }
        tracks.retain(|t| t.miss < cfg.miss_tolerance);
        out.push(emitted);
    }
    Ok(out)
}

/// Convert inference output to the ground-truth file frame structure.
pub fn outputs_to_frames(outputs: &[Vec<TrackOutput>]) -> FrameSeq {
    outputs
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|t| GtLabel {
                    identity: t.identity,
                    bbox: t.bbox,
                })
                .collect()
        })
        .collect()
}
