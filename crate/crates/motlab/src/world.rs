//! Synthetic multi-target scenario generation, ground-truth rendering, and a
//! simulated noisy detector.
//!
//! The arena is the unit square; sizes and speeds are arena units per frame.
//! Targets move with constant velocity plus Gaussian noise and reflect off
//! the walls. Everything is a pure function of `(config, seed)`.

use crate::error::{Error, Result};
use crate::geometry::{clamp_to_arena, l1_box_distance, BBox};
use crate::pld::PseudoLabel;
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One annotated target in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtLabel {
    pub identity: u64,
    pub bbox: BBox,
}

/// A whole sequence: per-frame label lists.
pub type FrameSeq = Vec<Vec<GtLabel>>;

/// Scenario generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_targets: usize,
    pub num_frames: usize,
    pub speed_range: (f64, f64),
    pub size_range: (f64, f64),
    /// Probability that a target is born after frame 0 (uniform over the
    /// first half of the timeline) instead of at frame 0.
    pub birth_prob: f64,
    /// Per-frame death hazard after birth.
    pub death_prob: f64,
    /// Standard deviation of the per-frame, per-axis motion noise.
    pub motion_noise: f64,
    /// Minimum center distance between targets' initial positions
    /// (best-effort rejection sampling; 0 disables).
    pub min_separation: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_targets: 4,
            num_frames: 64,
            speed_range: (0.0005, 0.002),
            size_range: (0.18, 0.3),
            birth_prob: 0.25,
            death_prob: 0.005,
            motion_noise: 0.0005,
            min_separation: 0.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(Error::Config("num_frames must be positive".into()));
        }
        let (s0, s1) = self.speed_range;
        if !(0.0 <= s0 && s0 <= s1) {
            return Err(Error::Config("speed_range must satisfy 0 <= lo <= hi".into()));
        }
        let (z0, z1) = self.size_range;
        if !(0.0 < z0 && z0 <= z1 && z1 < 1.0) {
            return Err(Error::Config("size_range must satisfy 0 < lo <= hi < 1".into()));
        }
        if !(0.0..=1.0).contains(&self.birth_prob) || !(0.0..=1.0).contains(&self.death_prob) {
            return Err(Error::Config("birth/death probabilities must be in [0, 1]".into()));
        }
        if self.motion_noise < 0.0 {
            return Err(Error::Config("motion_noise must be non-negative".into()));
        }
        if self.min_separation < 0.0 {
            return Err(Error::Config("min_separation must be non-negative".into()));
        }
        Ok(())
    }
}

/// One target's full trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    pub identity: u64,
    pub birth_frame: usize,
    /// Exclusive: alive while `birth_frame <= t < death_frame`.
    pub death_frame: usize,
    pub initial: BBox,
    pub velocity: (f64, f64),
    pub motion_noise: f64,
    /// Per-frame boxes, one entry per alive frame.
    boxes: Vec<BBox>,
}

impl TargetTrack {
    pub fn alive_at(&self, t: usize) -> bool {
        self.birth_frame <= t && t < self.death_frame
    }

    pub fn box_at(&self, t: usize) -> BBox {
        self.boxes[t - self.birth_frame]
    }
}

/// A generated scenario: immutable after generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_frames: usize,
    pub targets: Vec<TargetTrack>,
}

/// Reflect a coordinate into `[lo, hi]`, flipping the velocity on each
/// bounce.
fn reflect(mut x: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    for _ in 0..8 {
        if x < lo {
            x = lo + (lo - x);
            v = -v;
        } else if x > hi {
            x = hi - (x - hi);
            v = -v;
        } else {
            break;
        }
    }
    (x.clamp(lo, hi), v)
}

/// Generate a scenario deterministically from `(config, seed)`.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut targets = Vec::with_capacity(config.num_targets);
    for i in 0..config.num_targets {
        let identity = i as u64 + 1;
        let mut rng = rng::stream(seed, "target", identity);

        let w = rng.gen_range(config.size_range.0..=config.size_range.1);
        let h = rng.gen_range(config.size_range.0..=config.size_range.1);
        let mut cx = rng.gen_range(w / 2.0..=1.0 - w / 2.0);
        let mut cy = rng.gen_range(h / 2.0..=1.0 - h / 2.0);
        if config.min_separation > 0.0 {
            // Best-effort spacing against previously placed targets.
            for _ in 0..64 {
                let crowded = targets.iter().any(|t: &TargetTrack| {
                    let dx: f64 = t.initial.cx - cx;
                    let dy: f64 = t.initial.cy - cy;
                    dx.hypot(dy) < config.min_separation
                });
                if !crowded {
                    break;
                }
                cx = rng.gen_range(w / 2.0..=1.0 - w / 2.0);
                cy = rng.gen_range(h / 2.0..=1.0 - h / 2.0);
            }
        }
        let speed = rng.gen_range(config.speed_range.0..=config.speed_range.1);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let velocity = (speed * angle.cos(), speed * angle.sin());

        let birth_frame = if config.birth_prob > 0.0 && rng.gen::<f64>() < config.birth_prob {
            rng.gen_range(1..=(config.num_frames / 2).max(1))
        } else {
            0
        };
        let mut death_frame = config.num_frames;
        if config.death_prob > 0.0 {
            for t in birth_frame + 1..config.num_frames {
                if rng.gen::<f64>() < config.death_prob {
                    death_frame = t;
                    break;
                }
            }
        }
        let birth_frame = birth_frame.min(config.num_frames - 1);
        let death_frame = death_frame.max(birth_frame + 1);

        let mut motion = rng::stream(seed, "motion", identity);
        let noise = if config.motion_noise > 0.0 {
            Some(Normal::new(0.0, config.motion_noise).expect("validated sigma"))
        } else {
            None
        };
        let mut boxes = Vec::with_capacity(death_frame - birth_frame);
        let (mut x, mut y) = (cx, cy);
        let (mut vx, mut vy) = velocity;
        for step in 0..death_frame - birth_frame {
            if step > 0 {
                let (nx, ny) = match &noise {
                    Some(n) => (n.sample(&mut motion), n.sample(&mut motion)),
                    None => (0.0, 0.0),
                };
                let (rx, rvx) = reflect(x + vx + nx, vx, w / 2.0, 1.0 - w / 2.0);
                let (ry, rvy) = reflect(y + vy + ny, vy, h / 2.0, 1.0 - h / 2.0);
                x = rx;
                y = ry;
                vx = rvx;
                vy = rvy;
            }
            boxes.push(clamp_to_arena(BBox::new(x, y, w, h)));
        }

        targets.push(TargetTrack {
            identity,
            birth_frame,
            death_frame,
            initial: BBox::new(cx, cy, w, h),
            velocity,
            motion_noise: config.motion_noise,
            boxes,
        });
    }
    Ok(Scenario {
        num_frames: config.num_frames,
        targets,
    })
}

/// Labels of all targets alive at frame `t`.
pub fn render_frame(scenario: &Scenario, t: usize) -> Result<Vec<GtLabel>> {
    if t >= scenario.num_frames {
        return Err(Error::FrameOutOfRange {
            t,
            frames: scenario.num_frames,
        });
    }
    Ok(scenario
        .targets
        .iter()
        .filter(|target| target.alive_at(t))
        .map(|target| GtLabel {
            identity: target.identity,
            bbox: target.box_at(t),
        })
        .collect())
}

/// Render every frame of a scenario.
pub fn render_all(scenario: &Scenario) -> FrameSeq {
    (0..scenario.num_frames)
        .map(|t| render_frame(scenario, t).expect("t < num_frames"))
        .collect()
}

/// Simulated detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Gaussian noise applied per box coordinate.
    pub box_noise: f64,
    /// Probability that a ground-truth box is dropped.
    pub fn_rate: f64,
    /// False positives per frame follow `Poisson(fp_rate * K)`.
    pub fp_rate: f64,
    /// Confidence decay: `c_e = exp(-kappa * l1(noisy, clean))`.
    pub kappa: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            box_noise: 0.01,
            fn_rate: 0.05,
            fp_rate: 0.1,
            kappa: 5.0,
        }
    }
}

/// Simulate one frame of detections from its ground truth.
pub fn simulate_detector(gts: &[GtLabel], params: &DetectorParams, seed: u64) -> Vec<PseudoLabel> {
    let mut rng = rng::stream(seed, "detector", 0);
    let mut out = Vec::new();
    let noise = if params.box_noise > 0.0 {
        Some(Normal::new(0.0, params.box_noise).expect("positive sigma"))
    } else {
        None
    };
    for gt in gts {
        if rng.gen::<f64>() < params.fn_rate {
            continue;
        }
        let clean = gt.bbox;
        let noisy = match &noise {
            Some(n) => {
                let b = BBox::new(
                    clean.cx + n.sample(&mut rng),
                    clean.cy + n.sample(&mut rng),
                    (clean.w + n.sample(&mut rng)).max(1e-3),
                    (clean.h + n.sample(&mut rng)).max(1e-3),
                );
                clamp_to_arena(b)
            }
            None => clean,
        };
        let confidence = (-params.kappa * l1_box_distance(noisy, clean)).exp();
        out.push(PseudoLabel {
            bbox: noisy,
            confidence,
        });
    }
    let lambda = params.fp_rate * gts.len() as f64;
    if lambda > 0.0 {
        let count = Poisson::new(lambda).expect("positive lambda").sample(&mut rng) as usize;
        for _ in 0..count {
            let b = clamp_to_arena(BBox::new(
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.25),
                rng.gen_range(0.05..0.25),
            ));
            out.push(PseudoLabel {
                bbox: b,
                confidence: rng.gen_range(0.0..0.3),
            });
        }
    }
    out
}

/// Write a sequence in the ground-truth CSV convention:
/// `frame,id,bb_left,bb_top,bb_width,bb_height,1,1,1`, frames 1-based.
pub fn write_gt(frames: &FrameSeq) -> String {
    let mut out = String::new();
    for (t, labels) in frames.iter().enumerate() {
        for label in labels {
            let c = crate::geometry::to_corners(label.bbox);
            out.push_str(&format!(
                "{},{},{},{},{},{},1,1,1\n",
                t + 1,
                label.identity,
                c.x1,
                c.y1,
                label.bbox.w,
                label.bbox.h
            ));
        }
    }
    out
}

pub fn write_gt_file(path: &Path, frames: &FrameSeq) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(write_gt(frames).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Parse a ground-truth CSV back into per-frame label lists (0-based frames).
pub fn parse_gt(text: &str, origin: &str) -> Result<FrameSeq> {
    let mut rows: Vec<(u64, GtLabel)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::MalformedLine {
                path: origin.into(),
                line: lineno + 1,
                reason: format!("expected 9 fields, got {}", fields.len()),
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
        let identity = num(fields[1], "id")? as u64;
        let left = num(fields[2], "bb_left")?;
        let top = num(fields[3], "bb_top")?;
        let w = num(fields[4], "bb_width")?;
        let h = num(fields[5], "bb_height")?;
        rows.push((
            frame,
            GtLabel {
                identity,
                bbox: BBox::new(left + w / 2.0, top + h / 2.0, w, h),
            },
        ));
    }
    let max_frame = rows.iter().map(|&(f, _)| f).max().unwrap_or(0) as usize;
    let mut frames: FrameSeq = vec![Vec::new(); max_frame];
    for (f, label) in rows {
        frames[f as usize - 1].push(label);
    }
    Ok(frames)
}

pub fn read_gt_file(path: &Path) -> Result<FrameSeq> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gt(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_target_is_constant() {
        let config = ScenarioConfig {
            num_targets: 1,
            num_frames: 10,
            speed_range: (0.0, 0.0),
            birth_prob: 0.0,
            death_prob: 0.0,
            motion_noise: 0.0,
            ..Default::default()
        };
        let s = generate_scenario(&config, 4).unwrap();
        let first = render_frame(&s, 0).unwrap();
        for t in 1..10 {
            assert_eq!(render_frame(&s, t).unwrap(), first);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = ScenarioConfig::default();
        let a = generate_scenario(&config, 42).unwrap();
        let b = generate_scenario(&config, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(&config, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_frames_is_an_error() {
        let config = ScenarioConfig {
            num_frames: 0,
            ..Default::default()
        };
        assert!(matches!(
            generate_scenario(&config, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn analytic_trajectory_without_noise() {
        let config = ScenarioConfig {
            num_targets: 1,
            num_frames: 12,
            speed_range: (0.002, 0.002),
            size_range: (0.1, 0.1),
            birth_prob: 0.0,
            death_prob: 0.0,
            motion_noise: 0.0,
            ..Default::default()
        };
        let s = generate_scenario(&config, 9).unwrap();
        let target = &s.targets[0];
        for t in 0..12 {
            let b = target.box_at(t);
            let expect_x = target.initial.cx + t as f64 * target.velocity.0;
            let expect_y = target.initial.cy + t as f64 * target.velocity.1;
            // No reflection expected over 12 slow frames from an interior start.
            assert!((b.cx - expect_x).abs() < 1e-12, "t={t}");
            assert!((b.cy - expect_y).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn render_respects_birth_and_death() {
        let config = ScenarioConfig {
            num_targets: 6,
            num_frames: 40,
            birth_prob: 1.0,
            death_prob: 0.05,
            ..Default::default()
        };
        let s = generate_scenario(&config, 11).unwrap();
        for t in 0..40 {
            let labels = render_frame(&s, t).unwrap();
            let alive = s.targets.iter().filter(|x| x.alive_at(t)).count();
            assert_eq!(labels.len(), alive);
        }
        assert!(matches!(
            render_frame(&s, 40),
            Err(Error::FrameOutOfRange { .. })
        ));
        // With birth_prob 1 every target is born after frame 0.
        assert!(render_frame(&s, 0).unwrap().is_empty());
    }

    #[test]
    fn boxes_stay_in_arena() {
        let config = ScenarioConfig {
            num_targets: 5,
            num_frames: 200,
            speed_range: (0.01, 0.03),
            motion_noise: 0.002,
            birth_prob: 0.0,
            death_prob: 0.0,
            ..Default::default()
        };
        let s = generate_scenario(&config, 21).unwrap();
        for t in 0..200 {
            for label in render_frame(&s, t).unwrap() {
                let c = crate::geometry::to_corners(label.bbox);
                assert!(c.x1 >= -1e-12 && c.x2 <= 1.0 + 1e-12);
                assert!(c.y1 >= -1e-12 && c.y2 <= 1.0 + 1e-12);
                assert!(!label.bbox.is_degenerate());
            }
        }
    }

    #[test]
    fn noiseless_detector_copies_gt() {
        let gts = vec![
            GtLabel {
                identity: 1,
                bbox: BBox::new(0.3, 0.3, 0.2, 0.2),
            },
            GtLabel {
                identity: 2,
                bbox: BBox::new(0.7, 0.6, 0.15, 0.25),
            },
        ];
        let params = DetectorParams {
            box_noise: 0.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            kappa: 5.0,
        };
        let dets = simulate_detector(&gts, &params, 3);
        assert_eq!(dets.len(), 2);
        for (d, gt) in dets.iter().zip(&gts) {
            assert_eq!(d.bbox, gt.bbox);
            assert_eq!(d.confidence, 1.0);
        }
    }

    #[test]
    fn full_fn_rate_leaves_only_false_positives() {
        let gts = vec![GtLabel {
            identity: 1,
            bbox: BBox::new(0.3, 0.3, 0.2, 0.2),
        }];
        let params = DetectorParams {
            box_noise: 0.0,
            fn_rate: 1.0,
            fp_rate: 2.0,
            kappa: 5.0,
        };
        let dets = simulate_detector(&gts, &params, 5);
        for d in &dets {
            assert!(d.confidence < 0.3);
        }
    }

    #[test]
    fn detector_is_deterministic() {
        let gts = vec![GtLabel {
            identity: 1,
            bbox: BBox::new(0.3, 0.3, 0.2, 0.2),
        }];
        let params = DetectorParams::default();
        let a = simulate_detector(&gts, &params, 17);
        let b = simulate_detector(&gts, &params, 17);
        assert_eq!(a, b);
    }

    #[test]
    fn measured_drop_rate_matches_fn_rate() {
        let gts: Vec<GtLabel> = (0..100_000)
            .map(|i| GtLabel {
                identity: i + 1,
                bbox: BBox::new(0.5, 0.5, 0.2, 0.2),
            })
            .collect();
        let params = DetectorParams {
            box_noise: 0.0,
            fn_rate: 0.3,
            fp_rate: 0.0,
            kappa: 5.0,
        };
        let dets = simulate_detector(&gts, &params, 101);
        let dropped = 1.0 - dets.len() as f64 / gts.len() as f64;
        assert!((dropped - 0.3).abs() < 0.01, "dropped {dropped}");
    }

    #[test]
    fn confidence_monotone_in_jitter() {
        // Larger jitter always yields lower confidence under the exp model.
        let clean = BBox::new(0.5, 0.5, 0.2, 0.2);
        let mut prev = 1.0;
        for k in 1..=5 {
            let off = k as f64 * 0.01;
            let noisy = BBox::new(0.5 + off, 0.5, 0.2, 0.2);
            let c = (-5.0 * l1_box_distance(noisy, clean)).exp();
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn gt_round_trip_parses() {
        let config = ScenarioConfig::default();
        let s = generate_scenario(&config, 8).unwrap();
        let frames = render_all(&s);
        let text = write_gt(&frames);
        let parsed = parse_gt(&text, "mem").unwrap();
        assert_eq!(parsed.len(), frames.len().min(last_nonempty(&frames)));
        for (a, b) in frames.iter().zip(&parsed) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.identity, y.identity);
                assert!(l1_box_distance(x.bbox, y.bbox) < 1e-9);
            }
        }
    }

    fn last_nonempty(frames: &FrameSeq) -> usize {
        frames
            .iter()
            .rposition(|f| !f.is_empty())
            .map(|i| i + 1)
            .unwrap_or(0)
    }

    #[test]
    fn parse_gt_reports_line_numbers() {
        let err = parse_gt("1,1,0.1,0.1,0.2,0.2,1,1,1\nnot-a-line\n", "x.txt").unwrap_err();
        match err {
            Error::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
