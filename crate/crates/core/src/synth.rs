//! Synthetic labeled gesture streams.
//!
//! Each class is a closed circular path traced by one or both forearms on top
//! of a fixed rest posture. The path starts and ends at the rest pose, so a
//! gesture is a contiguous block of moving frames between still (gently
//! swaying) rest gaps. Draw order per sequence: global offset (3 uniforms),
//! body scale, then for each gesture slot the gap length, class and gesture
//! length, then the trailing gap, then per-coordinate noise in frame-major,
//! joint, axis order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::skeleton::{labels_from_annotations, Frame, FrameLabels, GestureAnnotation, SkeletonSequence, Vec3, DEFAULT_FRAME_RATE, N_JOINTS};
use crate::N_GESTURES;

/// Amplitude of the idle sway applied to every frame, meters.
pub const REST_SWAY_AMPLITUDE: f64 = 0.003;
/// Period of the idle sway, frames.
pub const REST_SWAY_PERIOD: f64 = 64.0;
/// Upper bound on the per-frame joint displacement caused by the sway:
/// amplitude times angular rate, rounded up.
pub const REST_MOTION_BOUND: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_sequences: usize,
    pub gestures_per_sequence: usize,
    pub rest_gap_range: (usize, usize),
    pub gesture_len_range: (usize, usize),
    pub noise_sigma: f64,
    /// Set from the pipeline's global seed rather than the config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_sequences: 24,
            gestures_per_sequence: 4,
            rest_gap_range: (16, 30),
            gesture_len_range: (28, 44),
            noise_sigma: 0.004,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=N_GESTURES).contains(&self.n_classes) {
            return Err(Error::invalid(format!("n_classes {} outside 1..20", self.n_classes)));
        }
        let (glo, ghi) = self.gesture_len_range;
        let (rlo, rhi) = self.rest_gap_range;
        if glo == 0 || glo > ghi {
            return Err(Error::invalid("gesture_len_range must be a non-empty range of positive lengths"));
        }
        if rlo > rhi {
            return Err(Error::invalid("rest_gap_range must be non-empty"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub sequence: SkeletonSequence,
    pub labels: FrameLabels,
    pub annotations: Vec<GestureAnnotation>,
}

/// Rest posture relative to the hip, meters (x right, y up, z away from the sensor).
pub const REST_POSE: Frame = [
    [0.0, 0.0, 0.0],      // HipCenter
    [0.0, 0.50, 0.0],     // ShoulderCenter
    [0.0, 0.72, 0.02],    // Head
    [-0.18, 0.45, 0.0],   // ShoulderLeft
    [-0.22, 0.18, 0.02],  // ElbowLeft
    [-0.23, -0.05, 0.0],  // WristLeft
    [-0.235, -0.12, 0.0], // HandLeft
    [0.18, 0.45, 0.0],    // ShoulderRight
    [0.22, 0.18, 0.02],   // ElbowRight
    [0.23, -0.05, 0.0],   // WristRight
    [0.235, -0.12, 0.0],  // HandRight
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
    Both,
}

/// Closed-form description of one class's motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMotion {
    pub side: Side,
    /// Unit axes spanning the circle plane; the hand moves along
    /// `radius * (a * (1 - cos θ) + b * sin θ)`.
    pub axis_a: Vec3,
    pub axis_b: Vec3,
    pub radius: f64,
    /// Whole turns per gesture.
    pub cycles: u32,
}

const ELBOW_SHARE: f64 = 0.45;
const WRIST_SHARE: f64 = 0.85;

impl ClassMotion {
    /// Motion of gesture class `class_id` (1-based).
    pub fn for_class(class_id: u8) -> ClassMotion {
        let k = usize::from(class_id.max(1) - 1);
        let side = match k % 3 {
            0 => Side::Right,
            1 => Side::Left,
            _ => Side::Both,
        };
        // Planes: frontal (up, out), sagittal (up, forward), transverse (out, forward).
        let (axis_a, axis_b) = match (k / 3) % 3 {
            0 => ([0.0, 1.0, 0.0], [1.0, 0.0, 0.0]),
            1 => ([0.0, 1.0, 0.0], [0.0, 0.0, -1.0]),
            _ => ([1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
        };
        ClassMotion {
            side,
            axis_a,
            axis_b,
            radius: 0.12 + 0.03 * (k % 4) as f64,
            cycles: 1 + (k / 9) as u32,
        }
    }

    /// Hand displacement at phase `tau` in [0, 1] for the right arm; the
    /// left arm mirrors the x component.
    pub fn hand_offset(&self, tau: f64) -> Vec3 {
        let theta = std::f64::consts::TAU * f64::from(self.cycles) * tau;
        let (s, c) = theta.sin_cos();
        let mut d = [0.0; 3];
        for (i, d) in d.iter_mut().enumerate() {
            *d = self.radius * (self.axis_a[i] * (1.0 - c) + self.axis_b[i] * s);
        }
        d
    }

    fn apply(&self, pose: &mut Frame, tau: f64, body_scale: f64) {
        let d = self.hand_offset(tau);
        let right = [8usize, 9, 10];
        let left = [4usize, 5, 6];
        let shares = [ELBOW_SHARE, WRIST_SHARE, 1.0];
        let mut move_arm = |joints: [usize; 3], mirror: f64| {
            for (j, share) in joints.into_iter().zip(shares) {
                pose[j][0] += body_scale * share * d[0] * mirror;
                pose[j][1] += body_scale * share * d[1];
                pose[j][2] += body_scale * share * d[2];
            }
        };
        match self.side {
            Side::Right => move_arm(right, 1.0),
            Side::Left => move_arm(left, -1.0),
            Side::Both => {
                move_arm(right, 1.0);
                move_arm(left, -1.0);
            }
        }
    }
}

/// Phase of frame `i` of a gesture lasting `len` frames. The endpoints 0 and
/// 1 fall on the surrounding rest frames.
pub fn gesture_phase(i: usize, len: usize) -> f64 {
    (i + 1) as f64 / (len + 1) as f64
}

fn sway(t: usize) -> f64 {
    REST_SWAY_AMPLITUDE * (std::f64::consts::TAU * t as f64 / REST_SWAY_PERIOD).sin()
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<SyntheticSequence>> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    (0..config.n_sequences)
        .map(|i| {
            let mut seq_rng = rng.fork();
            generate_one(config, &format!("seq_{i:04}"), &mut seq_rng)
        })
        .collect()
}

fn generate_one(config: &SynthConfig, id: &str, rng: &mut SplitMix64) -> Result<SyntheticSequence> {
    let offset = [rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(1.8, 3.0)];
    let body_scale = rng.uniform(0.9, 1.1);

    let mut annotations = Vec::with_capacity(config.gestures_per_sequence);
    let mut cursor = 0;
    for _ in 0..config.gestures_per_sequence {
        cursor += rng.range_inclusive(config.rest_gap_range.0, config.rest_gap_range.1);
        let class_id = 1 + rng.below(config.n_classes as u64) as u8;
        let len = rng.range_inclusive(config.gesture_len_range.0, config.gesture_len_range.1);
        annotations.push(GestureAnnotation {
            class_id,
            start_frame: cursor,
            end_frame: cursor + len - 1,
        });
        cursor += len;
    }
    cursor += rng.range_inclusive(config.rest_gap_range.0, config.rest_gap_range.1);
    let n_frames = cursor.max(1);

    let mut frames = vec![REST_POSE; n_frames];
    for (t, frame) in frames.iter_mut().enumerate() {
        let s = sway(t);
        for p in frame.iter_mut() {
            for c in p.iter_mut() {
                *c *= body_scale;
            }
            // Sway leans the upper body sideways and forward.
            p[0] += s * (p[1] / 0.5);
            p[2] += 0.5 * s * (p[1] / 0.5);
        }
    }
    for a in &annotations {
        let motion = ClassMotion::for_class(a.class_id);
        let len = a.len();
        for (i, frame) in frames[a.start_frame..=a.end_frame].iter_mut().enumerate() {
            motion.apply(frame, gesture_phase(i, len), body_scale);
        }
    }
    for frame in frames.iter_mut() {
        for p in frame.iter_mut() {
            for (c, o) in p.iter_mut().zip(offset) {
                *c += o;
            }
        }
    }
    if config.noise_sigma > 0.0 {
        for frame in frames.iter_mut() {
            for c in frame.iter_mut().flatten() {
                *c += config.noise_sigma * rng.normal();
            }
        }
    }
    debug_assert!(frames.iter().all(|f| f.len() == N_JOINTS));

    let labels = labels_from_annotations(&annotations, n_frames)?;
    Ok(SyntheticSequence {
        sequence: SkeletonSequence::new(id, DEFAULT_FRAME_RATE, frames)?,
        labels,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::runs;

    fn small(seed: u64, noise: f64, gestures: usize) -> SynthConfig {
        SynthConfig {
            n_classes: 5,
            n_sequences: 4,
            gestures_per_sequence: gestures,
            rest_gap_range: (10, 20),
            gesture_len_range: (20, 40),
            noise_sigma: noise,
            seed,
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = generate_synthetic(&small(42, 0.01, 3)).unwrap();
        let b = generate_synthetic(&small(42, 0.01, 3)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(43, 0.01, 3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_gesture_gives_one_run() {
        for s in generate_synthetic(&small(5, 0.0, 1)).unwrap() {
            let nonzero: Vec<_> = runs(&s.labels.0).into_iter().filter(|r| r.0 != 0).collect();
            assert_eq!(nonzero.len(), 1);
        }
    }

    #[test]
    fn rejects_bad_class_count() {
        let mut c = small(1, 0.0, 1);
        c.n_classes = 0;
        assert!(generate_synthetic(&c).is_err());
        c.n_classes = 21;
        assert!(generate_synthetic(&c).is_err());
    }

    #[test]
    fn class_motions_are_distinct_and_closed() {
        for a in 1..=20u8 {
            let m = ClassMotion::for_class(a);
            let end = m.hand_offset(1.0);
            assert!(end.iter().all(|c| c.abs() < 1e-12));
            for b in (a + 1)..=20u8 {
                assert_ne!(m, ClassMotion::for_class(b), "classes {a} and {b}");
            }
        }
    }

    // Per-frame motion: the smaller of the backward and forward steps, each
    // the largest joint displacement. Boundary frames use their single
    // neighbour. A rest frame adjacent to a gesture is still on one side.
    fn frame_motion(frames: &[Frame]) -> Vec<f64> {
        let step = |a: &Frame, b: &Frame| {
            a.iter()
                .zip(b)
                .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                .fold(0.0, f64::max)
        };
        let n = frames.len();
        (0..n)
            .map(|t| {
                let back = (t > 0).then(|| step(&frames[t], &frames[t - 1]));
                let fwd = (t + 1 < n).then(|| step(&frames[t + 1], &frames[t]));
                match (back, fwd) {
                    (Some(b), Some(f)) => b.min(f),
                    (Some(b), None) => b,
                    (None, Some(f)) => f,
                    (None, None) => 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn rest_bound_separates_labels() {
        // Sway speed bound from its closed form.
        let sway_rate = REST_SWAY_AMPLITUDE * std::f64::consts::TAU / REST_SWAY_PERIOD;
        // Largest joint height relative to the hip after scaling (head, 1.1 * 0.72).
        let lever = 1.1 * 0.72 / 0.5;
        assert!(sway_rate * lever * (1.0f64 + 0.25).sqrt() < REST_MOTION_BOUND);
        // Slowest gesture step: chord of the smallest circle at the slowest
        // phase rate, scaled by the smallest body.
        let slowest = 0.9 * 2.0 * 0.12 * (std::f64::consts::PI / 45.0).sin();
        assert!(slowest > REST_MOTION_BOUND + sway_rate * lever * 2.0);

        let cfg = SynthConfig {
            n_classes: 20,
            n_sequences: 6,
            gestures_per_sequence: 4,
            rest_gap_range: (5, 20),
            gesture_len_range: (12, 44),
            noise_sigma: 0.0,
            seed: 11,
        };
        for s in generate_synthetic(&cfg).unwrap() {
            let motion = frame_motion(s.sequence.frames());
            for (t, (&m, &l)) in motion.iter().zip(&s.labels.0).enumerate() {
                if l == 0 {
                    assert!(m < REST_MOTION_BOUND, "rest frame {t} moved {m}");
                } else {
                    assert!(m > REST_MOTION_BOUND, "gesture frame {t} moved {m}");
                }
            }
        }
    }
}
