//! The training loop: clip sampling, per-frame supervision, analytic
//! gradients, per-frame descent steps, and lifecycle bookkeeping.

use super::log::{FrameRecord, IterationRecord, LabelRoleRecord, PldEntry};
use super::model::{forward, Forward, QueryInput, QueryOrigin};
use super::supervise::{build_supervision, FrameSupervision, StagePreds, SupervisionFlags};
use super::{optimizer_step, ModelParams, SlotParams, TrainConfig};
use crate::error::{Error, Result};
use crate::lifecycle::{
    partition_gts, propagate_matching, retire_tracks, spawn_tracks, Role, TrackerState,
};
use crate::losses::PredictionGrad;
use crate::pld::{filter_pseudo, PseudoLabelSet};
use crate::rng;
use crate::tgd::{
    build_attention_mask, build_attention_mask_literal, expand_groups, noise_reference_boxes,
    GroupLayout,
};
use crate::world::{FrameSeq, GtLabel};
use rand::Rng;
use std::collections::BTreeMap;

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub records: Vec<IterationRecord>,
}

/// Sample the frame indices of one clip.
fn sample_clip(
    seq_len: usize,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let t = cfg.clip_len;
    let min_span = (t - 1) * cfg.interval_min;
    if seq_len < min_span + 1 {
        return Err(Error::Config(format!(
            "sequence of {seq_len} frames too short for a clip of {t} at interval {}",
            cfg.interval_min
        )));
    }
    let mut gaps: Vec<usize> = (0..t.saturating_sub(1))
        .map(|_| rng.gen_range(cfg.interval_min..=cfg.interval_max))
        .collect();
    let mut span: usize = gaps.iter().sum();
    // Shrink oversized gaps toward the minimum interval, last gap first.
    let mut excess = (span + 1).saturating_sub(seq_len);
    for g in gaps.iter_mut().rev() {
        if excess == 0 {
            break;
        }
        let take = excess.min(*g - cfg.interval_min);
        *g -= take;
        excess -= take;
    }
    span = gaps.iter().sum();
    let start = rng.gen_range(0..=seq_len - 1 - span);
    let mut frames = vec![start];
    for g in gaps {
        frames.push(frames.last().unwrap() + g);
    }
    Ok(frames)
}

/// Expanded queries of one frame plus the layout they follow.
struct FrameQueries {
    queries: Vec<QueryInput>,
    layout: GroupLayout,
}

fn assemble_queries(
    params: &ModelParams,
    state: &TrackerState,
    cfg: &TrainConfig,
    groups: usize,
    noise_seed: u64,
) -> FrameQueries {
    let m = params.anchors.len();
    let mut queries: Vec<QueryInput> = Vec::new();
    for (i, (anchor, slot)) in params.anchors.iter().zip(&params.detect).enumerate() {
        queries.push(QueryInput {
            ref_box: *anchor,
            params: slot.clone(),
            origin: QueryOrigin::Detect(i),
        });
    }
    let track_inputs: Vec<(u64, crate::geometry::BBox)> = state
        .live
        .iter()
        .map(|t| (t.slot_id, t.ref_box))
        .collect();
    let (expanded, layout) = expand_groups(&track_inputs, m, groups);
    let n = track_inputs.len();
    // Scaling noise applies to augmented copies only.
    let aug_refs: Vec<crate::geometry::BBox> = expanded[n..].iter().map(|&(_, b)| b).collect();
    let noised = if aug_refs.is_empty() {
        Vec::new()
    } else {
        noise_reference_boxes(&aug_refs, cfg.scale_range, noise_seed)
    };
    for (idx, &(slot_id, ref_box)) in expanded.iter().enumerate() {
        let slot_params = params.tracks.get(&slot_id).expect("live slot has params");
        if idx < n {
            queries.push(QueryInput {
                ref_box,
                params: slot_params.clone(),
                origin: QueryOrigin::Track(slot_id),
            });
        } else {
            let group = 1 + (idx - n) / n.max(1);
            queries.push(QueryInput {
                ref_box: noised[idx - n],
                params: slot_params.clone(),
                origin: QueryOrigin::Augmented {
                    group,
                    slot: slot_id,
                },
            });
        }
    }
    FrameQueries { queries, layout }
}

/// Chain per-stage prediction gradients through the decode Jacobians and the
/// cumulative-residual structure, folding augmented copies into their origin
/// slots.
pub(super) fn fold_gradients(
    queries: &[QueryInput],
    fwd: &Forward,
    pred_grads: &[Vec<PredictionGrad>],
    scale: f64,
    detect_count: usize,
    stages: usize,
) -> (Vec<SlotParams>, BTreeMap<u64, SlotParams>) {
    let mut detect = vec![SlotParams::zeros(stages); detect_count];
    let mut tracks: BTreeMap<u64, SlotParams> = BTreeMap::new();
    for (qi, q) in queries.iter().enumerate() {
        let slot = match q.origin {
            QueryOrigin::Detect(i) => &mut detect[i],
            QueryOrigin::Track(id) | QueryOrigin::Augmented { slot: id, .. } => {
                tracks.entry(id).or_insert_with(|| SlotParams::zeros(stages))
            }
        };
        for l in 0..stages {
            let g = &pred_grads[l][qi];
            let jac = &fwd.stages[l].jac[qi];
            // d loss / d raw (cx, cy, w, h) at stage l.
            let raw = [
                g.bbox[0] * jac[0].dc_dc + g.bbox[2] * jac[0].ds_dc,
                g.bbox[1] * jac[1].dc_dc + g.bbox[3] * jac[1].ds_dc,
                g.bbox[0] * jac[0].dc_ds + g.bbox[2] * jac[0].ds_ds,
                g.bbox[1] * jac[1].dc_ds + g.bbox[3] * jac[1].ds_ds,
            ];
            slot.stages[l].logit += scale * g.logit;
            // The stage-l box depends on every residual up to stage l.
            for k in 0..=l {
                for c in 0..4 {
                    slot.stages[k].delta[c] += scale * raw[c];
                }
            }
        }
    }
    (detect, tracks)
}

/// Everything produced while processing one frame.
struct FrameOutcome {
    record: FrameRecord,
    supervision: FrameSupervision,
    preds: StagePreds,
}

#[allow(clippy::too_many_arguments)]
fn process_frame(
    params: &mut ModelParams,
    state: &mut TrackerState,
    labels: &[GtLabel],
    pseudo_frame: &[crate::pld::PseudoLabel],
    cfg: &TrainConfig,
    frame_index: usize,
    noise_seed: u64,
    train: bool,
) -> Result<FrameOutcome> {
    let m = cfg.detect_queries;
    let partition = partition_gts(labels, state)?;
    if partition.free.len() > m {
        return Err(Error::Config(format!(
            "{} free labels exceed {} detect queries",
            partition.free.len(),
            m
        )));
    }
    propagate_matching(state, labels);

    let groups = if cfg.enable_tgd { cfg.track_groups } else { 1 };
    let fq = assemble_queries(params, state, cfg, groups, noise_seed);
    let mask = if cfg.mask_literal {
        build_attention_mask_literal(&fq.layout)
    } else {
        build_attention_mask(&fq.layout)
    };
    let fwd = forward(&fq.queries, &mask, cfg.suppression)?;
    let preds = fwd.stage_preds();

    let supervision = build_supervision(
        &preds,
        &fq.layout,
        labels,
        &partition.free,
        &state.sigma_t,
        pseudo_frame,
        SupervisionFlags {
            rfs: cfg.enable_rfs,
            pld: cfg.enable_pld,
            tgd: cfg.enable_tgd,
        },
        &cfg.weights,
    )?;

    let [base, pld, tgd] = if supervision.objects > 0 {
        supervision.losses(&preds, &cfg.weights)?
    } else {
        [Default::default(), Default::default(), Default::default()]
    };

    if train && supervision.objects > 0 {
        let pred_grads = supervision.gradients(&preds, &cfg.weights)?;
        let scale = 1.0 / supervision.objects as f64;
        let (detect_grads, track_grads) = fold_gradients(
            &fq.queries,
            &fwd,
            &pred_grads,
            scale,
            m,
            cfg.stages,
        );
        for (slot, grad) in params.detect.iter_mut().zip(&detect_grads) {
            optimizer_step(slot, grad, cfg.learning_rate)?;
        }
        for (slot_id, grad) in &track_grads {
            let slot = params
                .tracks
                .get_mut(slot_id)
                .expect("gradients only for live slots");
            optimizer_step(slot, grad, cfg.learning_rate)?;
        }
    }

    // Tracks hand their final predicted box forward as the next reference.
    let final_stage = &fwd.stages[cfg.stages - 1];
    for (pos, track) in state.live.iter_mut().enumerate() {
        track.ref_box = final_stage.boxes[m + pos];
    }

    let detect_scores: Vec<f64> = final_stage.suppressed[..m].to_vec();
    let detect_boxes: Vec<crate::geometry::BBox> = final_stage.boxes[..m].to_vec();
    let spawn_ids = spawn_tracks(
        state,
        &supervision.final_detect,
        &detect_scores,
        &detect_boxes,
        labels,
        cfg.spawn_threshold,
    )?;
    let mut spawns = Vec::with_capacity(spawn_ids.len());
    for slot_id in &spawn_ids {
        params
            .tracks
            .insert(*slot_id, SlotParams::track_init(cfg.stages));
        let identity = state
            .live
            .iter()
            .find(|t| t.slot_id == *slot_id)
            .map(|t| t.identity)
            .expect("just spawned");
        spawns.push((*slot_id, identity));
    }
    let retires = retire_tracks(state, cfg.miss_tolerance);
    for slot_id in &retires {
        params.tracks.remove(slot_id);
    }

    // Final-stage role of every label.
    let mut label_roles = Vec::with_capacity(labels.len());
    let sigma_t_log: Vec<(u64, usize)> = state
        .live
        .iter()
        .zip(&state.sigma_t)
        .filter_map(|(t, s)| s.map(|l| (t.slot_id, l)))
        .collect();
    for (idx, label) in labels.iter().enumerate() {
        if let Some(q) = supervision.final_detect.query_of(idx) {
            label_roles.push(LabelRoleRecord {
                label: idx,
                identity: label.identity,
                role: Role::Detect,
                query: q,
            });
        } else if let Some(pos) = state.sigma_t.iter().position(|s| *s == Some(idx)) {
            label_roles.push(LabelRoleRecord {
                label: idx,
                identity: label.identity,
                role: Role::Track,
                query: m + pos,
            });
        }
    }

    let (pld_matches, pld_background) = match &supervision.stage_pld {
        Some(stage_pld) => {
            let mut matches = Vec::with_capacity(stage_pld.len());
            let mut background = Vec::with_capacity(stage_pld.len());
            for (matching, kept) in stage_pld {
                let mut entries = Vec::with_capacity(matching.pairs.len());
                for &(q, l) in &matching.pairs {
                    let conf = pseudo_frame[kept[l]].confidence;
                    entries.push(PldEntry {
                        query: q,
                        conf,
                        weight: conf,
                    });
                }
                let bg: Vec<(usize, f64)> = matching
                    .unmatched_queries
                    .iter()
                    .map(|&q| (q, crate::losses::PLD_BACKGROUND_WEIGHT))
                    .collect();
                matches.push(entries);
                background.push(bg);
            }
            (matches, background)
        }
        None => (Vec::new(), Vec::new()),
    };

    let record = FrameRecord {
        frame: frame_index,
        objects: labels.len(),
        base,
        pld,
        tgd,
        stage_matchings: supervision
            .stage_base
            .iter()
            .map(|mtch| mtch.pairs.clone())
            .collect(),
        sigma_t: sigma_t_log,
        label_roles,
        pld_matches,
        pld_background,
        spawns,
        retires,
    };
    Ok(FrameOutcome {
        record,
        supervision,
        preds,
    })
}

/// Train over a corpus of sequences. One iteration samples one clip from one
/// sequence (round-robin); an epoch is one pass over the corpus.
pub fn run_training(
    sequences: &[FrameSeq],
    pseudo: Option<&[PseudoLabelSet]>,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    let filtered: Option<Vec<PseudoLabelSet>> = match (cfg.enable_pld, pseudo) {
        (true, Some(sets)) => {
            if sets.len() != sequences.len() {
                return Err(Error::Config(format!(
                    "{} detection sets for {} sequences",
                    sets.len(),
                    sequences.len()
                )));
            }
            Some(
                sets.iter()
                    .map(|s| filter_pseudo(s, cfg.pseudo_threshold))
                    .collect(),
            )
        }
        (true, None) => {
            return Err(Error::Config(
                "pseudo-label training enabled but no detections provided".into(),
            ))
        }
        (false, _) => None,
    };

    let mut params = ModelParams::init(cfg);
    let mut records = Vec::new();
    let iterations = cfg.epochs * sequences.len();
    for iteration in 0..iterations {
        let seq_idx = iteration % sequences.len();
        let seq = &sequences[seq_idx];
        let mut clip_rng = rng::stream(cfg.seed, "clip", iteration as u64);
        let clip = sample_clip(seq.len(), cfg, &mut clip_rng)?;

        let mut state = TrackerState::new();
        params.tracks.clear();
        let mut frames = Vec::with_capacity(clip.len());
        let mut frame_totals = Vec::with_capacity(clip.len());
        for (pos, &t) in clip.iter().enumerate() {
            let empty = Vec::new();
            let pseudo_frame: &[crate::pld::PseudoLabel] = match &filtered {
                Some(sets) => sets[seq_idx].frame(t as u64 + 1),
                None => &empty,
            };
            let noise_seed = rng::stream(cfg.seed, "tgd-noise", (iteration * cfg.clip_len + pos) as u64)
                .gen::<u64>();
            let outcome = process_frame(
                &mut params,
                &mut state,
                &seq[t],
                pseudo_frame,
                cfg,
                t,
                noise_seed,
                true,
            )?;
            frame_totals.push((
                outcome.record.base,
                outcome.record.pld,
                outcome.record.tgd,
                outcome.record.objects,
            ));
            frames.push(outcome.record);
        }
        let clip_loss = crate::losses::clip_loss(&frame_totals);
        records.push(IterationRecord {
            iteration,
            epoch: iteration / sequences.len(),
            sequence: seq_idx,
            clip,
            frames,
            clip_loss,
        });
    }
    Ok(TrainOutput { params, records })
}

/// Process a single frame without updating parameters; exposed for gradient
/// verification and dynamics experiments.
pub fn evaluate_single_frame(
    params: &ModelParams,
    state: &mut TrackerState,
    labels: &[GtLabel],
    pseudo_frame: &[crate::pld::PseudoLabel],
    cfg: &TrainConfig,
    noise_seed: u64,
) -> Result<(FrameRecord, FrameSupervision, StagePreds)> {
    let mut scratch = params.clone();
    let outcome = process_frame(
        &mut scratch,
        state,
        labels,
        pseudo_frame,
        cfg,
        0,
        noise_seed,
        false,
    )?;
    Ok((outcome.record, outcome.supervision, outcome.preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scenario, render_all, ScenarioConfig};

    fn tiny_corpus(n: usize) -> Vec<FrameSeq> {
        (0..n)
            .map(|i| {
                let cfg = ScenarioConfig {
                    num_targets: 3,
                    num_frames: 48,
                    birth_prob: 0.2,
                    death_prob: 0.0,
                    ..Default::default()
                };
                render_all(&generate_scenario(&cfg, 100 + i as u64).unwrap())
            })
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            detect_queries: 8,
            epochs: 2,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn clip_sampling_respects_bounds() {
        let cfg = tiny_cfg();
        for it in 0..50 {
            let mut rng = rng::stream(3, "clip", it);
            let clip = sample_clip(48, &cfg, &mut rng).unwrap();
            assert_eq!(clip.len(), cfg.clip_len);
            for w in clip.windows(2) {
                let gap = w[1] - w[0];
                assert!(gap >= cfg.interval_min && gap <= cfg.interval_max);
            }
            assert!(*clip.last().unwrap() < 48);
        }
    }

    #[test]
    fn clip_sampling_rejects_short_sequences() {
        let cfg = tiny_cfg();
        let mut rng = rng::stream(3, "clip", 0);
        assert!(sample_clip(4, &cfg, &mut rng).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus(2);
        let cfg = tiny_cfg();
        let a = run_training(&corpus, None, &cfg).unwrap();
        let b = run_training(&corpus, None, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(
            super::super::log::write_log(&a.records),
            super::super::log::write_log(&b.records)
        );
    }

    #[test]
    fn pld_requires_detections() {
        let corpus = tiny_corpus(1);
        let mut cfg = tiny_cfg();
        cfg.enable_pld = true;
        assert!(matches!(
            run_training(&corpus, None, &cfg),
            Err(Error::Config(_))
        ));
    }

    /// With only the base strategy on, the pseudo and group components are
    /// exactly zero in every record.
    #[test]
    fn component_additivity_when_flags_off(){
        let corpus = tiny_corpus(2);
        let cfg = tiny_cfg();
        let out = run_training(&corpus, None, &cfg).unwrap();
        for rec in &out.records {
            for f in &rec.frames {
                assert_eq!(f.pld.total, 0.0);
                assert_eq!(f.tgd.total, 0.0);
                let s = (f.base.total + f.pld.total + f.tgd.total) / f.objects.max(1) as f64;
                let _ = s;
            }
            let manual: f64 = rec
                .frames
                .iter()
                .filter(|f| f.objects > 0)
                .map(|f| (f.base.total + f.pld.total + f.tgd.total) / f.objects as f64)
                .sum();
            assert!((manual - rec.clip_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn tgd_produces_group_loss() {
        let corpus = tiny_corpus(1);
        let mut cfg = tiny_cfg();
        cfg.enable_tgd = true;
        cfg.epochs = 1;
        let out = run_training(&corpus, None, &cfg).unwrap();
        let any_group_loss = out
            .records
            .iter()
            .flat_map(|r| &r.frames)
            .any(|f| f.tgd.total > 0.0);
        assert!(any_group_loss, "group denoising never produced loss");
    }
}
