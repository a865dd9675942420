//! Track-query lifecycle: the free/locked label partition, frame-to-frame
//! matching propagation, spawning from confident detections, and retirement
//! of long-missing tracks.

use crate::assignment::Matching;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::world::GtLabel;
use serde::{Deserialize, Serialize};

/// Number of consecutive missed frames after which a track retires.
pub const DEFAULT_MISS_TOLERANCE: u32 = 5;

/// Role of a query slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Detect,
    Track,
}

/// A live track slot. Model parameters live with the engine, keyed by
/// `slot_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSlot {
    pub slot_id: u64,
    /// Target identity this slot is bound to; unique among live slots.
    pub identity: u64,
    /// Reference box, set at spawn from the spawning detect query's final
    /// predicted box and updated by the engine as the track follows.
    pub ref_box: BBox,
    pub miss_count: u32,
    /// Frames since spawn.
    pub age: u32,
}

/// Free/locked split of one frame's labels, by label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtPartition {
    pub free: Vec<usize>,
    pub locked: Vec<usize>,
}

/// Mutable tracker state for one run. Single-owner; never shared between
/// concurrent runs.
#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    /// Live track slots, ordered by slot id.
    pub live: Vec<TrackSlot>,
    pub next_slot_id: u64,
    /// Per live slot (same order as `live`): index of its identity's label
    /// in the current frame, if present.
    pub sigma_t: Vec<Option<usize>>,
}

impl TrackerState {
    pub fn new() -> Self {
        TrackerState::default()
    }

    pub fn is_bound(&self, identity: u64) -> bool {
        self.live.iter().any(|t| t.identity == identity)
    }
}

fn check_unique_identities(labels: &[GtLabel]) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            if a.identity == b.identity {
                return Err(Error::DuplicateIdentity(a.identity));
            }
        }
    }
    Ok(())
}

/// Split a frame's labels into free (no live track bound to the identity)
/// and locked (identity bound to a live track).
pub fn partition_gts(labels: &[GtLabel], state: &TrackerState) -> Result<GtPartition> {
    check_unique_identities(labels)?;
    let mut free = Vec::new();
    let mut locked = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        if state.is_bound(label.identity) {
            locked.push(idx);
        } else {
            free.push(idx);
        }
    }
    Ok(GtPartition { free, locked })
}

/// Propagate last frame's bindings into this frame: a live track maps to the
/// label of its bound identity when present (miss count reset), otherwise it
/// goes unmatched and its miss count grows.
pub fn propagate_matching(state: &mut TrackerState, labels: &[GtLabel]) {
    let mut sigma = Vec::with_capacity(state.live.len());
    for track in state.live.iter_mut() {
        let found = labels.iter().position(|l| l.identity == track.identity);
        match found {
            Some(idx) => {
                track.miss_count = 0;
                sigma.push(Some(idx));
            }
            None => {
                track.miss_count += 1;
                sigma.push(None);
            }
        }
        track.age += 1;
    }
    state.sigma_t = sigma;
}

/// Spawn a track slot for every matched detect query whose score clears the
/// threshold (strict), binding it to the matched label's identity.
///
/// `final_matching` is the final-stage detect matching; `final_scores` and
/// `final_boxes` are indexed like its query side.
pub fn spawn_tracks(
    state: &mut TrackerState,
    final_matching: &Matching,
    final_scores: &[f64],
    final_boxes: &[BBox],
    labels: &[GtLabel],
    threshold: f64,
) -> Result<Vec<u64>> {
    let mut spawned = Vec::new();
    for &(q, l) in &final_matching.pairs {
        if final_scores[q] > threshold {
            let identity = labels[l].identity;
            if state.is_bound(identity) {
                return Err(Error::IdentityAlreadyBound(identity));
            }
            let slot_id = state.next_slot_id;
            state.next_slot_id += 1;
            state.live.push(TrackSlot {
                slot_id,
                identity,
                ref_box: final_boxes[q],
                miss_count: 0,
                age: 0,
            });
            state.sigma_t.push(None);
            spawned.push(slot_id);
        }
    }
    Ok(spawned)
}

/// Remove slots that have been missing for at least `miss_tolerance` frames;
/// their identities are free again from the next frame on.
pub fn retire_tracks(state: &mut TrackerState, miss_tolerance: u32) -> Vec<u64> {
    let mut retired = Vec::new();
    let mut keep_live = Vec::with_capacity(state.live.len());
    let mut keep_sigma = Vec::with_capacity(state.sigma_t.len());
    for (track, sigma) in state.live.drain(..).zip(state.sigma_t.drain(..)) {
        if track.miss_count >= miss_tolerance {
            retired.push(track.slot_id);
        } else {
            keep_live.push(track);
            keep_sigma.push(sigma);
        }
    }
    state.live = keep_live;
    state.sigma_t = keep_sigma;
    retired
}
