//! Track-group expansion, reference-box scaling noise, and the attention
//! mask that stops information flowing between the real query block and the
//! augmented groups (and between different augmented groups).

use crate::geometry::BBox;
use crate::rng;
use rand::Rng;

/// Index layout of an expanded query list:
/// `[detect (M) | original tracks (N) | augmented groups 1..G-1 (N each)]`.
///
/// `G` counts the original group, so the total is `S = M + G * N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupLayout {
    pub detect: usize,
    pub tracks: usize,
    pub groups: usize,
}

impl GroupLayout {
    pub fn new(detect: usize, tracks: usize, groups: usize) -> Self {
        assert!(groups >= 1, "group count includes the original group");
        GroupLayout {
            detect,
            tracks,
            groups,
        }
    }

    /// Total query count `S = M + G * N`.
    pub fn total(&self) -> usize {
        self.detect + self.groups * self.tracks
    }

    /// Count of real queries `M + N`.
    pub fn real(&self) -> usize {
        self.detect + self.tracks
    }

    /// Augmented group number (1-based over groups, 0 = original block) of a
    /// global index at or beyond `real()`.
    fn aug_group(&self, idx: usize) -> usize {
        (idx - self.real()) / self.tracks
    }
}

/// Binary attention mask; `blocked(i, j)` means query `i` may not attend to
/// query `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    blocked: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[i * self.size + j]
    }

    /// Row-major text grid of 0/1, one row per line.
    pub fn render_grid(&self) -> String {
        let mut out = String::with_capacity(self.size * (self.size + 1));
        for i in 0..self.size {
            for j in 0..self.size {
                out.push(if self.blocked(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// Build the mask under the leakage-preventing reading: the real block
/// attends freely among itself and never sees augmented queries; each
/// augmented group sees the real block and itself only.
pub fn build_attention_mask(layout: &GroupLayout) -> AttentionMask {
    let s = layout.total();
    let real = layout.real();
    let mut blocked = vec![false; s * s];
    for i in 0..s {
        for j in 0..s {
            if i == j {
                continue;
            }
            let b = if i < real {
                j >= real
            } else {
                j >= real && layout.aug_group(i) != layout.aug_group(j)
            };
            blocked[i * s + j] = b;
        }
    }
    AttentionMask { size: s, blocked }
}

/// Build the mask exactly as printed: strict `j > M + N` in the first
/// condition, and the group comparison applied to every `j`. Kept behind the
/// `mask_literal` configuration flag for comparison.
pub fn build_attention_mask_literal(layout: &GroupLayout) -> AttentionMask {
    let s = layout.total();
    let real = layout.real() as i64;
    let n = layout.tracks as i64;
    let mut blocked = vec![false; s * s];
    for i in 0..s {
        for j in 0..s {
            let (ii, jj) = (i as i64, j as i64);
            let b = if ii < real {
                jj > real
            } else {
                (ii - real).div_euclid(n) != (jj - real).div_euclid(n)
            };
            blocked[i * s + j] = b && i != j;
        }
    }
    AttentionMask { size: s, blocked }
}

/// Replicate the original track block into `groups - 1` augmented copies.
///
/// Returns the expanded track list (original block first, then the copies in
/// group order) and the layout. Copies keep their origin's identity binding
/// and label assignment; nothing is re-matched for them.
pub fn expand_groups<T: Clone>(tracks: &[T], detect: usize, groups: usize) -> (Vec<T>, GroupLayout) {
    assert!(groups >= 1);
    let layout = GroupLayout::new(detect, tracks.len(), groups);
    let mut out = Vec::with_capacity(groups * tracks.len());
    for _ in 0..groups {
        out.extend_from_slice(tracks);
    }
    (out, layout)
}

/// Scale each box's width and height by independent uniform draws from
/// `[lo, hi]`, keeping the center fixed and the box inside the arena.
pub fn noise_reference_boxes(boxes: &[BBox], scale_range: (f64, f64), seed: u64) -> Vec<BBox> {
    let (lo, hi) = scale_range;
    assert!(0.0 < lo && lo <= hi, "scale range must satisfy 0 < lo <= hi");
    let mut rng = rng::stream(seed, "ref-noise", 0);
    boxes
        .iter()
        .map(|b| {
            let u = rng.gen_range(lo..=hi);
            let v = rng.gen_range(lo..=hi);
            let max_w = 2.0 * b.cx.min(1.0 - b.cx);
            let max_h = 2.0 * b.cy.min(1.0 - b.cy);
            BBox::new(b.cx, b.cy, (b.w * u).min(max_w), (b.h * v).min(max_h))
        })
        .collect()
}
