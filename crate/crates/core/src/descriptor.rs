//! The 183-component per-frame pose descriptor.
//!
//! Layout of one descriptor row:
//!
//! | range        | content                                         |
//! |--------------|-------------------------------------------------|
//! | `0..33`      | normalized joint positions (11 × xyz)           |
//! | `33..66`     | velocities                                      |
//! | `66..99`     | accelerations                                   |
//! | `99..108`    | inclination angles of the 9 joint triples       |
//! | `108..117`   | azimuth angles of the same triples              |
//! | `117..128`   | bending angle of each joint against the torso   |
//! | `128..183`   | the 55 pairwise joint distances                 |
//!
//! Positions are root-relative and rescaled bone by bone to reference
//! lengths, then smoothed over time with a 5-tap Gaussian before the
//! derivatives, angles and distances are taken.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::skeleton::{Frame, JointId, SkeletonSequence, Vec3, N_JOINTS};
use crate::synth::REST_POSE;

pub const DESCRIPTOR_WIDTH: usize = 183;
pub const N_TRIPLES: usize = 9;
pub const N_PAIRS: usize = N_JOINTS * (N_JOINTS - 1) / 2;
/// Ten tree edges followed by the two virtual bones.
pub const N_BONES: usize = 12;

pub const POSITIONS: Range<usize> = 0..33;
pub const VELOCITIES: Range<usize> = 33..66;
pub const ACCELERATIONS: Range<usize> = 66..99;
pub const INCLINATIONS: Range<usize> = 99..108;
pub const AZIMUTHS: Range<usize> = 108..117;
pub const BENDINGS: Range<usize> = 117..128;
pub const DISTANCES: Range<usize> = 128..183;

/// Joint triples (end, middle, end); the angle is measured at the middle joint.
pub const TRIPLES: [(JointId, JointId, JointId); N_TRIPLES] = {
    use JointId::*;
    [
        (ShoulderCenter, ShoulderLeft, ElbowLeft),
        (ShoulderCenter, ShoulderRight, ElbowRight),
        (ShoulderLeft, ElbowLeft, WristLeft),
        (ShoulderRight, ElbowRight, WristRight),
        (ElbowLeft, WristLeft, HandLeft),
        (ElbowRight, WristRight, HandRight),
        (Head, ShoulderCenter, HipCenter),
        (WristLeft, HandLeft, HipCenter),
        (WristRight, HandRight, HipCenter),
    ]
};

/// Gaussian taps exp(-k²/2), k = -2..=2, normalized to sum 1.
pub fn gaussian_kernel() -> [f64; 5] {
    let raw: [f64; 5] = std::array::from_fn(|i| {
        let k = i as f64 - 2.0;
        (-k * k / 2.0).exp()
    });
    let sum: f64 = raw.iter().sum();
    raw.map(|w| w / sum)
}

// ---------------------------------------------------------------------------
// small vector helpers

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

// Below this length a vector is treated as degenerate.
const DEGENERATE: f64 = 1e-12;

/// Relative size below which a projected bone counts as vertical.
const AZIMUTH_EPS: f64 = 1e-9;

fn unit(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > DEGENERATE).then(|| scale(a, 1.0 / n))
}

/// Angle between two vectors in [0, π]; 0 when either is degenerate.
fn angle_between(a: Vec3, b: Vec3) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na <= DEGENERATE || nb <= DEGENERATE {
        return 0.0;
    }
    // atan2 form stays accurate near 0 and π.
    norm(cross(a, b)).atan2(dot(a, b))
}

// ---------------------------------------------------------------------------
// bone normalization

/// Reference lengths for the 10 tree edges (in [`JointId::TREE_EDGES`]
/// order) followed by the two virtual bones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneLengths(pub [f64; N_BONES]);

impl BoneLengths {
    /// Per-edge mean length over every frame of every sequence.
    pub fn fit<'a>(sequences: impl IntoIterator<Item = &'a SkeletonSequence>) -> Result<Self> {
        let mut sum = [0.0; N_BONES];
        let mut count = 0usize;
        for seq in sequences {
            for frame in seq.frames() {
                for (k, (a, b)) in all_bones().enumerate() {
                    sum[k] += norm(sub(frame[b.code()], frame[a.code()]));
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Missing("no frames to fit bone lengths".into()));
        }
        let lengths = sum.map(|s| s / count as f64);
        Self::new(lengths)
    }

    pub fn new(lengths: [f64; N_BONES]) -> Result<Self> {
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("reference bone lengths must be positive"));
        }
        Ok(BoneLengths(lengths))
    }

    /// Lengths of the built-in rest posture.
    pub fn canonical() -> Self {
        let mut l = [0.0; N_BONES];
        for (k, (a, b)) in all_bones().enumerate() {
            l[k] = norm(sub(REST_POSE[b.code()], REST_POSE[a.code()]));
        }
        BoneLengths(l)
    }
}

fn all_bones() -> impl Iterator<Item = (JointId, JointId)> {
    JointId::TREE_EDGES.into_iter().chain(JointId::VIRTUAL_BONES)
}

fn canonical_direction(edge: usize) -> Vec3 {
    let (p, c) = JointId::TREE_EDGES[edge];
    unit(sub(REST_POSE[c.code()], REST_POSE[p.code()])).expect("rest pose has no zero bones")
}

/// Root-relative poses with every tree bone rescaled to its reference
/// length. A zero-length bone takes the previous frame's direction, or the
/// rest-pose direction in the first frame.
pub fn normalize_skeleton(seq: &SkeletonSequence, bones: &BoneLengths) -> Vec<Frame> {
    let mut prev_dirs: [Vec3; 10] = std::array::from_fn(canonical_direction);
    seq.frames()
        .iter()
        .map(|frame| {
            let mut out = [[0.0; 3]; N_JOINTS];
            for (k, (p, c)) in JointId::TREE_EDGES.into_iter().enumerate() {
                let dir = unit(sub(frame[c.code()], frame[p.code()])).unwrap_or(prev_dirs[k]);
                prev_dirs[k] = dir;
                out[c.code()] = add(out[p.code()], scale(dir, bones.0[k]));
            }
            out
        })
        .collect()
}

// ---------------------------------------------------------------------------
// temporal filters

/// 5-tap Gaussian (σ = 1) with edge replication.
pub fn gaussian_smooth(series: &[f64]) -> Vec<f64> {
    let k = gaussian_kernel();
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|t| {
            k.iter()
                .enumerate()
                .map(|(i, w)| {
                    let idx = (t as isize + i as isize - 2).clamp(0, n as isize - 1) as usize;
                    w * series[idx]
                })
                .sum()
        })
        .collect()
}

/// First and second differences per frame: central in the interior,
/// one-sided at the two ends. Fewer than 3 frames: one-sided velocity, zero
/// acceleration.
pub fn derivatives(series: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = series.len();
    let p = series;
    match n {
        0 => (Vec::new(), Vec::new()),
        1 => (vec![0.0], vec![0.0]),
        2 => {
            let d = p[1] - p[0];
            (vec![d, d], vec![0.0, 0.0])
        }
        _ => {
            let mut v = vec![0.0; n];
            let mut a = vec![0.0; n];
            for t in 1..n - 1 {
                v[t] = (p[t + 1] - p[t - 1]) / 2.0;
                a[t] = p[t + 1] - 2.0 * p[t] + p[t - 1];
            }
            v[0] = p[1] - p[0];
            v[n - 1] = p[n - 1] - p[n - 2];
            a[0] = p[2] - 2.0 * p[1] + p[0];
            a[n - 1] = p[n - 1] - 2.0 * p[n - 2] + p[n - 3];
            (v, a)
        }
    }
}

// ---------------------------------------------------------------------------
// angles and distances

/// Orthonormal body frame: `up` from hip to shoulder center, `lateral`
/// towards the left shoulder, `normal = up × lateral` out of the torso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrame {
    pub up: Vec3,
    pub lateral: Vec3,
    pub normal: Vec3,
}

impl BodyFrame {
    pub const CANONICAL: BodyFrame = BodyFrame {
        up: [0.0, 1.0, 0.0],
        lateral: [-1.0, 0.0, 0.0],
        normal: [0.0, 0.0, 1.0],
    };

    /// None when the torso is degenerate.
    pub fn from_pose(pose: &Frame) -> Option<BodyFrame> {
        let up = unit(sub(
            pose[JointId::ShoulderCenter.code()],
            pose[JointId::HipCenter.code()],
        ))?;
        let across = sub(
            pose[JointId::ShoulderLeft.code()],
            pose[JointId::ShoulderRight.code()],
        );
        let lateral = unit(sub(across, scale(up, dot(across, up))))?;
        let normal = cross(up, lateral);
        Some(BodyFrame { up, lateral, normal })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Angles {
    pub inclination: [f64; N_TRIPLES],
    pub azimuth: [f64; N_TRIPLES],
    pub bending: [f64; N_JOINTS],
}

/// Angles of one pose in the given body frame.
pub fn angles(pose: &Frame, body: &BodyFrame) -> Angles {
    let mut inclination = [0.0; N_TRIPLES];
    let mut azimuth = [0.0; N_TRIPLES];
    for (i, (a, m, b)) in TRIPLES.into_iter().enumerate() {
        let b1 = sub(pose[a.code()], pose[m.code()]);
        let b2 = sub(pose[b.code()], pose[m.code()]);
        inclination[i] = angle_between(b1, b2);
        let p1 = sub(b1, scale(body.up, dot(b1, body.up)));
        let p2 = sub(b2, scale(body.up, dot(b2, body.up)));
        // A bone (anti)parallel to `up` has no horizontal direction: its
        // projection is pure rounding noise, so the azimuth is pinned to 0.
        // The spine triple always hits this since `up` is the hip bone.
        azimuth[i] = if norm(p1) <= AZIMUTH_EPS * norm(b1) || norm(p2) <= AZIMUTH_EPS * norm(b2) {
            0.0
        } else {
            let az = dot(body.up, cross(p1, p2)).atan2(dot(p1, p2));
            if az <= -std::f64::consts::PI {
                std::f64::consts::PI
            } else {
                az
            }
        };
    }
    let bending = std::array::from_fn(|j| angle_between(body.normal, pose[j]));
    Angles {
        inclination,
        azimuth,
        bending,
    }
}

/// Euclidean distances for joint pairs (i, j), i < j, in lexicographic order.
pub fn pairwise_distances(pose: &Frame) -> [f64; N_PAIRS] {
    let mut out = [0.0; N_PAIRS];
    let mut k = 0;
    for i in 0..N_JOINTS {
        for j in i + 1..N_JOINTS {
            out[k] = norm(sub(pose[i], pose[j]));
            k += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// standardization

/// Per-component z-score statistics fitted on training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Mean and population standard deviation per column. Columns with no
    /// spread store std = 1.
    pub fn fit(descriptors: ArrayView2<f64>) -> Result<Self> {
        let n = descriptors.nrows();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 frames to fit, got {n}")));
        }
        let mean: Vec<f64> = descriptors.mean_axis(Axis(0)).expect("n >= 2").to_vec();
        let std = descriptors
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(col, &m)| {
                let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                let s = var.sqrt();
                if s <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, descriptors: &mut Array2<f64>) -> Result<()> {
        if descriptors.ncols() != self.width() {
            return Err(Error::Shape {
                what: "descriptor width vs standardizer",
                expected: self.width(),
                got: descriptors.ncols(),
            });
        }
        for mut row in descriptors.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(())
    }
}

/// Everything fitted on training data that the descriptor pipeline needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub bones: BoneLengths,
    pub standardizer: Standardizer,
}

impl FeatureStats {
    /// Fit bone lengths, then the standardizer on the raw descriptors of the
    /// same sequences.
    pub fn fit(sequences: &[&SkeletonSequence]) -> Result<Self> {
        let bones = BoneLengths::fit(sequences.iter().copied())?;
        let raw: Vec<Array2<f64>> = sequences.iter().map(|s| raw_descriptors(s, &bones)).collect();
        let views: Vec<_> = raw.iter().map(|m| m.view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(FeatureStats {
            bones,
            standardizer: Standardizer::fit(all.view())?,
        })
    }

    pub fn descriptors(&self, seq: &SkeletonSequence) -> Result<Array2<f64>> {
        build_descriptors(seq, &self.bones, Some(&self.standardizer))
    }
}

// ---------------------------------------------------------------------------
// full pipeline

/// Unstandardized descriptors, one row per frame.
pub fn raw_descriptors(seq: &SkeletonSequence, bones: &BoneLengths) -> Array2<f64> {
    let normalized = normalize_skeleton(seq, bones);
    let n = normalized.len();

    // Smooth every coordinate track, then differentiate it.
    let mut smoothed = vec![[[0.0; 3]; N_JOINTS]; n];
    let mut out = Array2::zeros((n, DESCRIPTOR_WIDTH));
    let mut track = vec![0.0; n];
    for j in 0..N_JOINTS {
        for c in 0..3 {
            for (t, pose) in normalized.iter().enumerate() {
                track[t] = pose[j][c];
            }
            let s = gaussian_smooth(&track);
            let (v, a) = derivatives(&s);
            let col = 3 * j + c;
            for t in 0..n {
                smoothed[t][j][c] = s[t];
                out[[t, POSITIONS.start + col]] = s[t];
                out[[t, VELOCITIES.start + col]] = v[t];
                out[[t, ACCELERATIONS.start + col]] = a[t];
            }
        }
    }

    let mut body = BodyFrame::CANONICAL;
    for (t, pose) in smoothed.iter().enumerate() {
        if let Some(b) = BodyFrame::from_pose(pose) {
            body = b;
        }
        let ang = angles(pose, &body);
        let dist = pairwise_distances(pose);
        let mut row = out.row_mut(t);
        for (k, v) in ang.inclination.iter().enumerate() {
            row[INCLINATIONS.start + k] = *v;
        }
        for (k, v) in ang.azimuth.iter().enumerate() {
            row[AZIMUTHS.start + k] = *v;
        }
        for (k, v) in ang.bending.iter().enumerate() {
            row[BENDINGS.start + k] = *v;
        }
        for (k, v) in dist.iter().enumerate() {
            row[DISTANCES.start + k] = *v;
        }
    }
    out
}

pub fn build_descriptors(
    seq: &SkeletonSequence,
    bones: &BoneLengths,
    standardizer: Option<&Standardizer>,
) -> Result<Array2<f64>> {
    let mut d = raw_descriptors(seq, bones);
    if let Some(s) = standardizer {
        s.apply(&mut d)?;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("descriptor of {}", seq.sequence_id)));
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// GDESC dump: ASCII header line, then little-endian binary64 row-major.

pub fn write_descriptor_dump(path: impl AsRef<Path>, descriptors: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("GDESC 1 {} {}\n", descriptors.nrows(), descriptors.ncols()).into_bytes();
    buf.reserve(descriptors.len() * 8);
    for x in descriptors.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_dump(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(1, "missing GDESC header").with_file(path))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse(1, "header is not UTF-8").with_file(path))?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 4 || f[0] != "GDESC" || f[1] != "1" {
        return Err(Error::parse(1, "expected `GDESC 1 <n_frames> <width>`").with_file(path));
    }
    let rows: usize = f[2].parse().map_err(|_| Error::parse(1, "bad row count").with_file(path))?;
    let cols: usize = f[3].parse().map_err(|_| Error::parse(1, "bad column count").with_file(path))?;
    let body = &bytes[nl + 1..];
    if body.len() != rows * cols * 8 {
        return Err(Error::parse(1, format!("payload holds {} bytes, expected {}", body.len(), rows * cols * 8)).with_file(path));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("size checked"))
}
