//! Pseudo-label ingestion, confidence filtering, and the auxiliary matching
//! pathway against detector output.
//!
//! Detection files follow the MOT-challenge detection convention: one line
//! per box, `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`, with
//! `id`/`x`/`y`/`z` fixed at -1, coordinates in arena units, frames 1-based,
//! no header.

use crate::assignment::{build_cost_matrix, hungarian, Matching};
use crate::error::{Error, Result};
use crate::geometry::{clamp_to_arena, BBox};
use crate::losses::LossWeights;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// A detector box with its confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub bbox: BBox,
    pub confidence: f64,
}

/// Per-frame pseudo labels for one sequence, keyed by the 1-based file frame
/// number. Immutable after load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    frames: BTreeMap<u64, Vec<PseudoLabel>>,
}

impl PseudoLabelSet {
    pub fn new() -> Self {
        PseudoLabelSet::default()
    }

    pub fn push(&mut self, frame: u64, label: PseudoLabel) {
        self.frames.entry(frame).or_default().push(label);
    }

    /// Labels of a 1-based frame number; empty when absent.
    pub fn frame(&self, frame: u64) -> &[PseudoLabel] {
        self.frames.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = (&u64, &Vec<PseudoLabel>)> {
        self.frames.iter()
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Parse a detection CSV. Boxes are clamped to the arena; order within a
/// frame is preserved.
pub fn parse_detections(text: &str, origin: &str) -> Result<PseudoLabelSet> {
    let mut set = PseudoLabelSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::MalformedLine {
                path: origin.into(),
                line: lineno + 1,
                reason: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::MalformedLine {
                path: origin.into(),
                line: lineno + 1,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        let frame = num(fields[0], "frame")? as u64;
        if frame == 0 {
            return Err(Error::MalformedLine {
                path: origin.into(),
                line: lineno + 1,
                reason: "frame numbers are 1-based".into(),
            });
        }
        let left = num(fields[2], "bb_left")?;
        let top = num(fields[3], "bb_top")?;
        let w = num(fields[4], "bb_width")?;
        let h = num(fields[5], "bb_height")?;
        let conf = num(fields[6], "conf")?;
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::MalformedLine {
                path: origin.into(),
                line: lineno + 1,
                reason: format!("confidence {conf} outside [0, 1]"),
            });
        }
        let bbox = clamp_to_arena(BBox::new(left + w / 2.0, top + h / 2.0, w, h));
        set.push(
            frame,
            PseudoLabel {
                bbox,
                confidence: conf,
            },
        );
    }
    Ok(set)
}

/// Load a detection CSV from disk.
pub fn load_detections(path: &Path) -> Result<PseudoLabelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, &path.display().to_string())
}

/// Serialize a set back to the detection CSV convention.
pub fn write_detections(set: &PseudoLabelSet) -> String {
    let mut out = String::new();
    for (frame, labels) in set.frames() {
        for label in labels {
            let c = crate::geometry::to_corners(label.bbox);
            out.push_str(&format!(
                "{},-1,{},{},{},{},{},-1,-1,-1\n",
                frame, c.x1, c.y1, label.bbox.w, label.bbox.h, label.confidence
            ));
        }
    }
    out
}

pub fn write_detections_file(path: &Path, set: &PseudoLabelSet) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(write_detections(set).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Keep labels with confidence at or above the threshold.
pub fn filter_pseudo(set: &PseudoLabelSet, threshold: f64) -> PseudoLabelSet {
    let mut out = PseudoLabelSet::new();
    for (&frame, labels) in set.frames() {
        for label in labels {
            if label.confidence >= threshold {
                out.push(frame, *label);
            }
        }
    }
    out
}

/// Result of [`pld_match`]: the matching plus the indices (into the input
/// list) of the pseudo labels that participated.
#[derive(Debug, Clone)]
pub struct PldMatch {
    pub matching: Matching,
    /// `kept[j]` is the input index of matched-side label `j`.
    pub kept: Vec<usize>,
}

/// One-to-one matching between all real queries and a frame's pseudo labels.
///
/// When pseudo labels outnumber queries, only the highest-confidence ones
/// (ties by input order) participate; a warning is logged.
pub fn pld_match(
    queries: &[(BBox, f64)],
    pseudo_frame: &[PseudoLabel],
    weights: &LossWeights,
) -> Result<PldMatch> {
    let mut kept: Vec<usize> = (0..pseudo_frame.len()).collect();
    if pseudo_frame.len() > queries.len() {
        log::warn!(
            "{} pseudo labels for {} queries; keeping the {} highest-confidence",
            pseudo_frame.len(),
            queries.len(),
            queries.len()
        );
        kept.sort_by(|&a, &b| {
            pseudo_frame[b]
                .confidence
                .partial_cmp(&pseudo_frame[a].confidence)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        kept.truncate(queries.len());
        kept.sort_unstable();
    }
    if kept.is_empty() {
        return Ok(PldMatch {
            matching: Matching::empty(queries.len()),
            kept,
        });
    }
    let boxes: Vec<BBox> = kept.iter().map(|&i| pseudo_frame[i].bbox).collect();
    let cost = build_cost_matrix(queries, &boxes, weights)?;
    let matching = hungarian(&cost)?;
    Ok(PldMatch { matching, kept })
}
