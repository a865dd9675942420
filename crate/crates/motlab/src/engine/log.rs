//! Training log records, persisted as newline-delimited JSON, one record per
//! iteration. Byte-reproducible for a fixed manifest.

use crate::error::{Error, Result};
use crate::lifecycle::Role;
use crate::losses::LossBreakdown;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One pseudo-label match entry: the query, the pseudo label's confidence,
/// and the loss weight it received.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PldEntry {
    pub query: usize,
    pub conf: f64,
    pub weight: f64,
}

/// Final-stage role of one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRoleRecord {
    pub label: usize,
    pub identity: u64,
    pub role: Role,
    /// Expanded query index of the final-stage match (detect slot index for
    /// free labels, `detect + position` for tracked ones).
    pub query: usize,
}

/// Everything recorded about one processed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub objects: usize,
    pub base: LossBreakdown,
    pub pld: LossBreakdown,
    pub tgd: LossBreakdown,
    /// Base matching pair list per stage (query, label).
    pub stage_matchings: Vec<Vec<(usize, usize)>>,
    /// Propagated track assignment (slot id, label).
    pub sigma_t: Vec<(u64, usize)>,
    pub label_roles: Vec<LabelRoleRecord>,
    /// Matched pseudo-label entries per stage.
    pub pld_matches: Vec<Vec<PldEntry>>,
    /// Background pseudo-label entries per stage (query, weight).
    pub pld_background: Vec<Vec<(usize, f64)>>,
    /// (slot id, identity) of tracks spawned this frame.
    pub spawns: Vec<(u64, u64)>,
    pub retires: Vec<u64>,
}

/// One training iteration: a clip of frames from one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub sequence: usize,
    pub clip: Vec<usize>,
    pub frames: Vec<FrameRecord>,
    pub clip_loss: f64,
}

/// Serialize records as NDJSON.
pub fn write_log(records: &[IterationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

/// Parse an NDJSON log.
pub fn read_log(text: &str) -> Result<Vec<IterationRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: IterationRecord = serde_json::from_str(line).map_err(|source| Error::LogParse {
            line: lineno + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_log(&text)
}
