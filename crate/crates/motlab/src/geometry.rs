//! Normalized axis-aligned boxes and their overlap measures.
//!
//! All coordinates are arena-normalized: a valid box, in corner form, lies
//! inside the unit square. Corner form is internal to overlap computation;
//! everything else works with `(cx, cy, w, h)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Center-size box: `(cx, cy, w, h)` in arena units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner box: `(x1, y1, x2, y2)` with `x1 <= x2`, `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// A box with zero width or height carries no interior and is rejected
    /// by overlap and loss operations.
    pub fn is_degenerate(&self) -> bool {
        self.w <= 0.0 || self.h <= 0.0
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

fn ensure_valid(b: &BBox) -> Result<()> {
    if b.is_degenerate() {
        return Err(Error::DegenerateBox { w: b.w, h: b.h });
    }
    Ok(())
}

/// Convert to corner form. Exact inverse of [`from_corners`].
pub fn to_corners(b: BBox) -> CornerBox {
    CornerBox {
        x1: b.cx - b.w / 2.0,
        y1: b.cy - b.h / 2.0,
        x2: b.cx + b.w / 2.0,
        y2: b.cy + b.h / 2.0,
    }
}

/// Convert from corner form back to center-size form.
pub fn from_corners(c: CornerBox) -> BBox {
    BBox {
        cx: (c.x1 + c.x2) / 2.0,
        cy: (c.y1 + c.y2) / 2.0,
        w: c.x2 - c.x1,
        h: c.y2 - c.y1,
    }
}

/// Intersection-over-union of two non-degenerate boxes, in `[0, 1]`.
pub fn iou(a: BBox, b: BBox) -> Result<f64> {
    ensure_valid(&a)?;
    ensure_valid(&b)?;
    Ok(iou_unchecked(a, b))
}

/// IoU without the degeneracy check; callers guarantee valid boxes.
pub(crate) fn iou_unchecked(a: BBox, b: BBox) -> f64 {
    let ca = to_corners(a);
    let cb = to_corners(b);
    let iw = (ca.x2.min(cb.x2) - ca.x1.max(cb.x1)).max(0.0);
    let ih = (ca.y2.min(cb.y2) - ca.y1.max(cb.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU in `(-1, 1]`: IoU minus the enclosure penalty
/// `(area(enclosure) - area(union)) / area(enclosure)`.
pub fn giou(a: BBox, b: BBox) -> Result<f64> {
    ensure_valid(&a)?;
    ensure_valid(&b)?;
    let ca = to_corners(a);
    let cb = to_corners(b);
    let iw = (ca.x2.min(cb.x2) - ca.x1.max(cb.x1)).max(0.0);
    let ih = (ca.y2.min(cb.y2) - ca.y1.max(cb.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let ew = ca.x2.max(cb.x2) - ca.x1.min(cb.x1);
    let eh = ca.y2.max(cb.y2) - ca.y1.min(cb.y1);
    let enclosure = ew * eh;
    Ok(inter / union - (enclosure - union) / enclosure)
}

/// Gradient of `giou(a, b)` with respect to `a`'s `(cx, cy, w, h)`.
///
/// Piecewise closed form; at the (measure-zero) kinks where a min/max
/// argument ties, the subgradient of the branch currently selected by the
/// strict comparison is reported.
pub fn giou_grad(a: BBox, b: BBox) -> Result<[f64; 4]> {
    ensure_valid(&a)?;
    ensure_valid(&b)?;
    let ca = to_corners(a);
    let cb = to_corners(b);

    let ix1 = ca.x1.max(cb.x1);
    let ix2 = ca.x2.min(cb.x2);
    let iy1 = ca.y1.max(cb.y1);
    let iy2 = ca.y2.min(cb.y2);
    let iw = (ix2 - ix1).max(0.0);
    let ih = (iy2 - iy1).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let ew = ca.x2.max(cb.x2) - ca.x1.min(cb.x1);
    let eh = ca.y2.max(cb.y2) - ca.y1.min(cb.y1);
    let enclosure = ew * eh;

    // d inter / d (a corners)
    let overlap = iw > 0.0 && ih > 0.0;
    let di_dax1 = if overlap && ca.x1 > cb.x1 { -ih } else { 0.0 };
    let di_dax2 = if overlap && ca.x2 < cb.x2 { ih } else { 0.0 };
    let di_day1 = if overlap && ca.y1 > cb.y1 { -iw } else { 0.0 };
    let di_day2 = if overlap && ca.y2 < cb.y2 { iw } else { 0.0 };

    // d area(a) / d (a corners)
    let da_dax1 = -a.h;
    let da_dax2 = a.h;
    let da_day1 = -a.w;
    let da_day2 = a.w;

    // d enclosure / d (a corners)
    let de_dax1 = if ca.x1 < cb.x1 { -eh } else { 0.0 };
    let de_dax2 = if ca.x2 > cb.x2 { eh } else { 0.0 };
    let de_day1 = if ca.y1 < cb.y1 { -ew } else { 0.0 };
    let de_day2 = if ca.y2 > cb.y2 { ew } else { 0.0 };

    // giou = I/U - 1 + U/C, with dU = dA - dI.
    let g = |di: f64, da: f64, de: f64| -> f64 {
        let du = da - di;
        (di * union - inter * du) / (union * union) + (du * enclosure - union * de) / (enclosure * enclosure)
    };
    let g_ax1 = g(di_dax1, da_dax1, de_dax1);
    let g_ax2 = g(di_dax2, da_dax2, de_dax2);
    let g_ay1 = g(di_day1, da_day1, de_day1);
    let g_ay2 = g(di_day2, da_day2, de_day2);

    // Chain corners back to (cx, cy, w, h): x1 = cx - w/2, x2 = cx + w/2.
    Ok([
        g_ax1 + g_ax2,
        g_ay1 + g_ay2,
        (g_ax2 - g_ax1) / 2.0,
        (g_ay2 - g_ay1) / 2.0,
    ])
}

/// Sum of absolute differences of the four `(cx, cy, w, h)` components.
pub fn l1_box_distance(a: BBox, b: BBox) -> f64 {
    (a.cx - b.cx).abs() + (a.cy - b.cy).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}

/// Subgradient of [`l1_box_distance`] with respect to `a`; 0 at ties.
pub fn l1_box_grad(a: BBox, b: BBox) -> [f64; 4] {
    let s = |x: f64, y: f64| {
        if x > y {
            1.0
        } else if x < y {
            -1.0
        } else {
            0.0
        }
    };
    [s(a.cx, b.cx), s(a.cy, b.cy), s(a.w, b.w), s(a.h, b.h)]
}

/// Clip the corner form into the unit square and re-encode. Idempotent:
/// boxes already inside (up to representation error) come back unchanged.
pub fn clamp_to_arena(b: BBox) -> BBox {
    const TOL: f64 = 1e-12;
    let c = to_corners(b);
    if c.x1 >= -TOL && c.y1 >= -TOL && c.x2 <= 1.0 + TOL && c.y2 <= 1.0 + TOL {
        return b;
    }
    from_corners(CornerBox {
        x1: c.x1.clamp(0.0, 1.0),
        y1: c.y1.clamp(0.0, 1.0),
        x2: c.x2.clamp(0.0, 1.0),
        y2: c.y2.clamp(0.0, 1.0),
    })
}
