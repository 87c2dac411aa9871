//! Skeleton sequences, frame labels, annotations and the `GSKEL` text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::N_CLASSES;

pub const N_JOINTS: usize = 11;
pub const DEFAULT_FRAME_RATE: f64 = 20.0;

/// The 11 upper-body joints. Discriminants are the on-disk codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum JointId {
    HipCenter = 0,
    ShoulderCenter = 1,
    Head = 2,
    ShoulderLeft = 3,
    ElbowLeft = 4,
    WristLeft = 5,
    HandLeft = 6,
    ShoulderRight = 7,
    ElbowRight = 8,
    WristRight = 9,
    HandRight = 10,
}

impl JointId {
    pub const ALL: [JointId; N_JOINTS] = [
        JointId::HipCenter,
        JointId::ShoulderCenter,
        JointId::Head,
        JointId::ShoulderLeft,
        JointId::ElbowLeft,
        JointId::WristLeft,
        JointId::HandLeft,
        JointId::ShoulderRight,
        JointId::ElbowRight,
        JointId::WristRight,
        JointId::HandRight,
    ];

    pub const ROOT: JointId = JointId::HipCenter;

    /// Kinematic tree edges as (parent, child), listed so that every parent
    /// appears before its children.
    pub const TREE_EDGES: [(JointId, JointId); 10] = [
        (JointId::HipCenter, JointId::ShoulderCenter),
        (JointId::ShoulderCenter, JointId::Head),
        (JointId::ShoulderCenter, JointId::ShoulderLeft),
        (JointId::ShoulderLeft, JointId::ElbowLeft),
        (JointId::ElbowLeft, JointId::WristLeft),
        (JointId::WristLeft, JointId::HandLeft),
        (JointId::ShoulderCenter, JointId::ShoulderRight),
        (JointId::ShoulderRight, JointId::ElbowRight),
        (JointId::ElbowRight, JointId::WristRight),
        (JointId::WristRight, JointId::HandRight),
    ];

    /// Virtual bones linking each hand to the hip; used only for angles.
    pub const VIRTUAL_BONES: [(JointId, JointId); 2] = [
        (JointId::HandLeft, JointId::HipCenter),
        (JointId::HandRight, JointId::HipCenter),
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<JointId> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::HipCenter => "HipCenter",
            JointId::ShoulderCenter => "ShoulderCenter",
            JointId::Head => "Head",
            JointId::ShoulderLeft => "ShoulderLeft",
            JointId::ElbowLeft => "ElbowLeft",
            JointId::WristLeft => "WristLeft",
            JointId::HandLeft => "HandLeft",
            JointId::ShoulderRight => "ShoulderRight",
            JointId::ElbowRight => "ElbowRight",
            JointId::WristRight => "WristRight",
            JointId::HandRight => "HandRight",
        }
    }
}

pub type Vec3 = [f64; 3];
pub type Frame = [Vec3; N_JOINTS];

/// Per-frame world coordinates of the 11 joints, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub sequence_id: String,
    pub frame_rate: f64,
    frames: Vec<Frame>,
}

impl SkeletonSequence {
    pub fn new(sequence_id: impl Into<String>, frame_rate: f64, frames: Vec<Frame>) -> Result<Self> {
        let sequence_id = sequence_id.into();
        if sequence_id.is_empty() || sequence_id.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "sequence id {sequence_id:?} must be non-empty without whitespace"
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate {frame_rate} must be positive")));
        }
        if frames.is_empty() {
            return Err(Error::invalid("a sequence needs at least one frame"));
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(format!("coordinate in frame {t}")));
            }
        }
        Ok(Self {
            sequence_id,
            frame_rate,
            frames,
        })
    }

    /// Build from a flat row-major buffer of `n_frames * 33` coordinates.
    pub fn from_flat(sequence_id: impl Into<String>, frame_rate: f64, coords: &[f64]) -> Result<Self> {
        if coords.len() % (N_JOINTS * 3) != 0 {
            return Err(Error::Shape {
                what: "flat coordinate buffer (multiple of 33)",
                expected: (coords.len() / 33 + 1) * 33,
                got: coords.len(),
            });
        }
        let frames = coords
            .chunks_exact(N_JOINTS * 3)
            .map(|row| {
                let mut f = [[0.0; 3]; N_JOINTS];
                for (j, p) in f.iter_mut().enumerate() {
                    p.copy_from_slice(&row[3 * j..3 * j + 3]);
                }
                f
            })
            .collect();
        Self::new(sequence_id, frame_rate, frames)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Copy with every coordinate mapped through `f`.
    pub fn map_coords(&self, mut f: impl FnMut(Vec3) -> Vec3) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|fr| {
                let mut out = *fr;
                for p in out.iter_mut() {
                    *p = f(*p);
                }
                out
            })
            .collect();
        Self {
            sequence_id: self.sequence_id.clone(),
            frame_rate: self.frame_rate,
            frames,
        }
    }
}

/// A labeled gesture instance with an inclusive frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GestureAnnotation {
    pub class_id: u8,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl GestureAnnotation {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-frame class id: 0 is rest, 1..=20 are gestures.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameLabels(pub Vec<u8>);

impl FrameLabels {
    pub fn rest(len: usize) -> Self {
        FrameLabels(vec![0; len])
    }

    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= N_CLASSES) {
            return Err(Error::invalid(format!("label {bad} outside 0..20")));
        }
        Ok(FrameLabels(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Maximal runs of identical nonzero labels.
    pub fn to_annotations(&self) -> Vec<GestureAnnotation> {
        runs(&self.0)
            .into_iter()
            .filter(|&(c, _, _)| c != 0)
            .map(|(class_id, start_frame, end_frame)| GestureAnnotation {
                class_id,
                start_frame,
                end_frame,
            })
            .collect()
    }

    /// Binary activity mask (label != 0).
    pub fn activity(&self) -> Vec<bool> {
        self.0.iter().map(|&l| l != 0).collect()
    }
}

/// Maximal constant runs as (value, start, end) with inclusive ends.
pub fn runs<T: Copy + PartialEq>(values: &[T]) -> Vec<(T, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] != values[start] {
            out.push((values[start], start, i - 1));
            start = i;
        }
    }
    out
}

pub fn labels_from_annotations(annotations: &[GestureAnnotation], length: usize) -> Result<FrameLabels> {
    let mut labels = vec![0u8; length];
    let mut owner: Vec<Option<usize>> = vec![None; length];
    for (k, a) in annotations.iter().enumerate() {
        if a.class_id == 0 || usize::from(a.class_id) >= N_CLASSES {
            return Err(Error::invalid(format!("annotation {k}: class {} outside 1..20", a.class_id)));
        }
        if a.start_frame > a.end_frame || a.end_frame >= length {
            return Err(Error::invalid(format!(
                "annotation {k}: interval {}..{} outside [0, {length})",
                a.start_frame, a.end_frame
            )));
        }
        for t in a.start_frame..=a.end_frame {
            if let Some(other) = owner[t] {
                return Err(Error::invalid(format!(
                    "annotations {other} and {k} overlap at frame {t}"
                )));
            }
            owner[t] = Some(k);
            labels[t] = a.class_id;
        }
    }
    Ok(FrameLabels(labels))
}

pub fn format_sequence(seq: &SkeletonSequence, labels: Option<&FrameLabels>) -> String {
    let mut out = String::with_capacity(seq.len() * 33 * 12);
    let _ = writeln!(
        out,
        "GSKEL 1 {} {} {}",
        seq.len(),
        seq.frame_rate,
        seq.sequence_id
    );
    for frame in seq.frames() {
        let mut first = true;
        for c in frame.iter().flatten() {
            if !first {
                out.push(' ');
            }
            first = false;
            // Display for f64 is the shortest string that round-trips.
            let _ = write!(out, "{c}");
        }
        out.push('\n');
    }
    if let Some(labels) = labels {
        out.push_str("LABELS\n");
        let strs: Vec<String> = labels.0.iter().map(u8::to_string).collect();
        out.push_str(&strs.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_sequence(text: &str) -> Result<(SkeletonSequence, FrameLabels)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::parse(1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "GSKEL" {
        return Err(Error::parse(hline, "expected header `GSKEL 1 <n_frames> <frame_rate> <sequence_id>`"));
    }
    if fields[1] != "1" {
        return Err(Error::parse(hline, format!("unsupported GSKEL version {}", fields[1])));
    }
    let n_frames: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse(hline, format!("bad frame count {:?}", fields[2])))?;
    let frame_rate: f64 = fields[3]
        .parse()
        .map_err(|_| Error::parse(hline, format!("bad frame rate {:?}", fields[3])))?;
    if n_frames == 0 {
        return Err(Error::parse(hline, "frame count must be at least 1"));
    }

    let mut frames = Vec::with_capacity(n_frames);
    while frames.len() < n_frames {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(hline, format!("expected {n_frames} frames, found {}", frames.len())))?;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != N_JOINTS * 3 {
            return Err(Error::parse(
                ln,
                format!(
                    "wrong joint count at line {ln}: {} values ({} joints), expected 33",
                    vals.len(),
                    vals.len() as f64 / 3.0
                ),
            ));
        }
        let mut frame = [[0.0; 3]; N_JOINTS];
        for (k, v) in vals.iter().enumerate() {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(ln, format!("malformed number {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::parse(ln, format!("non-finite coordinate {v:?}")));
            }
            frame[k / 3][k % 3] = x;
        }
        frames.push(frame);
    }

    let mut labels = None;
    while let Some((ln, line)) = lines.next() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t != "LABELS" || labels.is_some() {
            return Err(Error::parse(ln, format!("unexpected content {t:?}")));
        }
        let mut vals = Vec::with_capacity(n_frames);
        for (ln, line) in lines.by_ref() {
            for tok in line.split_whitespace() {
                let v: u8 = tok
                    .parse()
                    .map_err(|_| Error::parse(ln, format!("malformed label {tok:?}")))?;
                if usize::from(v) >= N_CLASSES {
                    return Err(Error::parse(ln, format!("label {v} out of 0..20")));
                }
                vals.push(v);
            }
            if vals.len() >= n_frames {
                break;
            }
        }
        if vals.len() != n_frames {
            return Err(Error::parse(ln, format!("expected {n_frames} labels, found {}", vals.len())));
        }
        labels = Some(FrameLabels(vals));
    }

    let seq = SkeletonSequence::new(fields[4], frame_rate, frames)
        .map_err(|e| Error::parse(hline, e.to_string()))?;
    let labels = labels.unwrap_or_else(|| FrameLabels::rest(n_frames));
    Ok((seq, labels))
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<(SkeletonSequence, FrameLabels)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text).map_err(|e| e.with_file(path))
}

pub fn save_sequence(path: impl AsRef<Path>, seq: &SkeletonSequence, labels: Option<&FrameLabels>) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != seq.len() {
            return Err(Error::Shape {
                what: "labels vs frames",
                expected: seq.len(),
                got: l.len(),
            });
        }
    }
    std::fs::write(path, format_sequence(seq, labels)).map_err(|e| Error::io(path, e))
}
