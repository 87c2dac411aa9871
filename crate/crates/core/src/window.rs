//! Sliding-window classification of activity periods.
//!
//! A dynamic pose concatenates three descriptors sampled `s` frames apart
//! (a window of `2s + 1` frames). One classifier per scale scores every
//! window of a period; Method A uses a single scale, Method B fuses three
//! scales whose windows share centre frames. Decision rules then turn the
//! window scores into labelled frame intervals.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::descriptor::{FeatureStats, DESCRIPTOR_WIDTH};
use crate::error::{Error, Result};
use crate::nn::mlp::fit_mlp_scg;
use crate::nn::{argmax, one_hot, Activation, Architecture, Loss, Mlp, MlpSpec, NetworkModel, ScgConfig, ScgOutcome};
use crate::rng::SplitMix64;
use crate::segmenter::ActivityPeriod;
use crate::skeleton::{runs, GestureAnnotation};
use crate::N_GESTURES;

pub const POSES_PER_WINDOW: usize = 3;
pub const DYNAMIC_POSE_WIDTH: usize = POSES_PER_WINDOW * DESCRIPTOR_WIDTH;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub slide_step: usize,
    pub min_windows: usize,
    /// Longest period, in frames, handled by the short-period rule.
    pub short_period_max: usize,
    pub consec_required: usize,
    pub hidden: (usize, usize),
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            slide_step: 2,
            min_windows: 5,
            short_period_max: 54,
            consec_required: 3,
            hidden: (300, 100),
            max_iterations: 300,
            seed: 2,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slide_step == 0 || self.min_windows == 0 || self.consec_required == 0 {
            return Err(Error::invalid("slide_step, min_windows and consec_required must be positive"));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::invalid("classifier hidden sizes must be positive"));
        }
        Ok(())
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            sizes: vec![DYNAMIC_POSE_WIDTH, self.hidden.0, self.hidden.1, N_GESTURES],
            activations: vec![Activation::Tanh, Activation::Tanh, Activation::Softmax],
            loss: Loss::CategoricalCrossEntropy,
        }
    }
}

/// Score thresholds of the short- and long-period rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub short: f64,
    pub long: f64,
}

impl Thresholds {
    pub const METHOD_A: Thresholds = Thresholds { short: 0.8717, long: 0.6255 };
    pub const METHOD_B: Thresholds = Thresholds { short: 0.6014, long: 0.6033 };

    pub fn validate(&self) -> Result<()> {
        for t in [self.short, self.long] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid(format!("threshold {t} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodAConfig {
    pub scale_step: usize,
    pub thresholds: Thresholds,
}

impl Default for MethodAConfig {
    fn default() -> Self {
        Self {
            scale_step: 4,
            thresholds: Thresholds::METHOD_A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodBConfig {
    pub scale_steps: [usize; 3],
    pub weights: [f64; 3],
    pub thresholds: Thresholds,
}

impl Default for MethodBConfig {
    fn default() -> Self {
        Self {
            scale_steps: [4, 3, 2],
            weights: [0.4895, 0.4576, 0.0529],
            thresholds: Thresholds::METHOD_B,
        }
    }
}

impl MethodBConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale_steps.contains(&0) {
            return Err(Error::invalid("scale steps must be positive"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("fusion weights must be finite and non-negative"));
        }
        self.thresholds.validate()
    }
}

// ---------------------------------------------------------------------------
// resampling

/// Resamples every column at `target_len` evenly spaced positions over
/// `[0, n - 1]` with a natural cubic spline through the `n` rows.
pub fn cubic_resize(data: ArrayView2<f64>, target_len: usize) -> Result<Array2<f64>> {
    let n = data.nrows();
    if n < 2 || target_len < 2 {
        return Err(Error::invalid(format!("cubic resize needs >= 2 samples and targets, got {n} -> {target_len}")));
    }
    let positions: Vec<f64> = (0..target_len)
        .map(|k| k as f64 * (n - 1) as f64 / (target_len - 1) as f64)
        .collect();
    let mut out = Array2::zeros((target_len, data.ncols()));
    let mut y = vec![0.0; n];
    for (c, col) in data.columns().into_iter().enumerate() {
        y.iter_mut().zip(col).for_each(|(d, v)| *d = *v);
        let m = natural_second_derivatives(&y);
        for (k, &x) in positions.iter().enumerate() {
            let i = (x.floor() as usize).min(n - 2);
            let t = x - i as f64;
            let u = 1.0 - t;
            out[[k, c]] = u * y[i] + t * y[i + 1] + ((u * u * u - u) * m[i] + (t * t * t - t) * m[i + 1]) / 6.0;
        }
    }
    Ok(out)
}

/// Second derivatives at unit-spaced knots with zero end curvature.
fn natural_second_derivatives(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system m[i-1] + 4 m[i] + m[i+1] = 6 Δ²y[i], Thomas algorithm.
    let k = n - 2;
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let denom = 4.0 - cp;
        c[i] = 1.0 / denom;
        d[i] = (rhs - dp) / denom;
    }
    for i in (0..k).rev() {
        m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
    }
    m
}

// ---------------------------------------------------------------------------
// dynamic poses

/// Dynamic poses of one period at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPoses {
    /// One 549-wide row per window.
    pub poses: Array2<f64>,
    /// Centre frame of each window, in original sequence coordinates.
    pub centers: Vec<usize>,
    /// Inclusive frame interval each window covers, original coordinates.
    pub covers: Vec<(usize, usize)>,
}

impl DynamicPoses {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// The period's descriptor block, resized when it is too short to yield
/// `min_windows` windows of `span` frames.
struct PeriodBlock {
    data: Array2<f64>,
    start: usize,
    len: usize,
}

impl PeriodBlock {
    fn new(descriptors: ArrayView2<f64>, period: ActivityPeriod, span: usize, config: &WindowConfig) -> Result<Self> {
        if period.end < period.start || period.end >= descriptors.nrows() {
            return Err(Error::invalid(format!(
                "period {}..={} outside a {}-frame sequence",
                period.start,
                period.end,
                descriptors.nrows()
            )));
        }
        let block = descriptors.slice(s![period.start..=period.end, ..]);
        let needed = span + (config.min_windows - 1) * config.slide_step;
        let data = if window_count(period.len(), span, config.slide_step) < config.min_windows {
            cubic_resize(block, needed)?
        } else {
            block.to_owned()
        };
        Ok(PeriodBlock {
            data,
            start: period.start,
            len: period.len(),
        })
    }

    /// Maps a block row back to a sequence frame.
    fn to_frame(&self, r: usize) -> usize {
        let m = self.data.nrows();
        if m == self.len {
            return self.start + r;
        }
        self.start + ((r as f64) * (self.len - 1) as f64 / (m - 1) as f64).round() as usize
    }

    /// Centres of the windows of `span` frames sliding from the first row.
    fn centers(&self, span: usize, slide: usize) -> Vec<usize> {
        let count = window_count(self.data.nrows(), span, slide);
        (0..count).map(|k| k * slide + span / 2).collect()
    }

    fn poses_at(&self, centers: &[usize], scale_step: usize) -> DynamicPoses {
        let mut poses = Array2::zeros((centers.len(), DYNAMIC_POSE_WIDTH));
        let mut covers = Vec::with_capacity(centers.len());
        for (k, &c) in centers.iter().enumerate() {
            let first = c - scale_step;
            for j in 0..POSES_PER_WINDOW {
                poses
                    .slice_mut(s![k, j * DESCRIPTOR_WIDTH..(j + 1) * DESCRIPTOR_WIDTH])
                    .assign(&self.data.row(first + j * scale_step));
            }
            covers.push((self.to_frame(first), self.to_frame(c + scale_step)));
        }
        DynamicPoses {
            poses,
            centers: centers.iter().map(|&c| self.to_frame(c)).collect(),
            covers,
        }
    }
}

/// Windows of `span` frames, sliding by `slide`, that fit in `len` frames.
pub fn window_count(len: usize, span: usize, slide: usize) -> usize {
    if len < span {
        0
    } else {
        (len - span) / slide + 1
    }
}

/// Dynamic poses of every window of `2s + 1` frames inside the period.
pub fn extract_dynamic_poses(
    descriptors: ArrayView2<f64>,
    period: ActivityPeriod,
    scale_step: usize,
    config: &WindowConfig,
) -> Result<DynamicPoses> {
    if scale_step == 0 {
        return Err(Error::invalid("scale step must be positive"));
    }
    let span = 2 * scale_step + 1;
    let block = PeriodBlock::new(descriptors, period, span, config)?;
    let centers = block.centers(span, config.slide_step);
    Ok(block.poses_at(&centers, scale_step))
}

/// Dynamic poses at every scale, all windows centred on the centres of the
/// widest scale so that row `k` of every set describes the same instant.
pub fn extract_aligned_poses(
    descriptors: ArrayView2<f64>,
    period: ActivityPeriod,
    scale_steps: &[usize],
    config: &WindowConfig,
) -> Result<Vec<DynamicPoses>> {
    let widest = *scale_steps.iter().max().ok_or_else(|| Error::invalid("no scales"))?;
    if scale_steps.contains(&0) {
        return Err(Error::invalid("scale step must be positive"));
    }
    let span = 2 * widest + 1;
    let block = PeriodBlock::new(descriptors, period, span, config)?;
    let centers = block.centers(span, config.slide_step);
    Ok(scale_steps.iter().map(|&s| block.poses_at(&centers, s)).collect())
}

// ---------------------------------------------------------------------------
// training

/// Dynamic poses of every ground-truth gesture, with 0-based class targets.
pub fn build_window_training_set(
    sequences: &[(ArrayView2<f64>, &[GestureAnnotation])],
    scale_step: usize,
    config: &WindowConfig,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut blocks = Vec::new();
    let mut classes = Vec::new();
    for (d, annotations) in sequences {
        for a in annotations.iter() {
            if a.class_id == 0 || usize::from(a.class_id) > N_GESTURES {
                return Err(Error::invalid(format!("gesture class {} outside 1..20", a.class_id)));
            }
            let period = ActivityPeriod {
                start: a.start_frame,
                end: a.end_frame,
            };
            let poses = extract_dynamic_poses(*d, period, scale_step, config)?;
            classes.extend(std::iter::repeat_n(usize::from(a.class_id) - 1, poses.len()));
            blocks.push(poses.poses);
        }
    }
    if blocks.is_empty() {
        return Err(Error::Missing("no gestures to train the window classifier".into()));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let x = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((x, classes))
}

pub fn train_window_classifier(
    inputs: ArrayView2<f64>,
    classes: &[usize],
    scale_step: usize,
    stats: Option<FeatureStats>,
    config: &WindowConfig,
) -> Result<(NetworkModel, ScgOutcome)> {
    config.validate()?;
    let targets = one_hot(classes, N_GESTURES)?;
    let mut rng = SplitMix64::new(config.seed ^ scale_step as u64);
    let mut mlp = Mlp::init(config.spec(), &mut rng)?;
    let scg = ScgConfig {
        max_iterations: config.max_iterations,
        ..Default::default()
    };
    let outcome = fit_mlp_scg(&mut mlp, inputs, targets.view(), &scg)?;
    let model = NetworkModel::new(Architecture::Mlp(mlp), stats)
        .with_meta("role", "window-classifier")
        .with_meta("scale_step", scale_step);
    Ok((model, outcome))
}

/// Softmax scores of every window (rows) over the 20 gestures.
pub fn window_scores(model: &NetworkModel, poses: &DynamicPoses) -> Result<Array2<f64>> {
    let mlp = model.as_mlp()?;
    if mlp.spec.output_width() != N_GESTURES {
        return Err(Error::ModelMismatch(format!(
            "window classifier must have {N_GESTURES} outputs, has {}",
            mlp.spec.output_width()
        )));
    }
    mlp.forward(poses.poses.view())
}

// ---------------------------------------------------------------------------
// decisions

/// Class decision for one window: 1-based gesture id when its best score is
/// strictly above `threshold`.
fn vote(row: &[f64], threshold: f64) -> Option<u8> {
    let k = argmax(row);
    (row[k] > threshold).then_some(k as u8 + 1)
}

/// Turns window scores into labelled intervals inside `period`.
///
/// Short periods get one label overall, by absolute majority of the
/// confident windows. Long periods label the frames under every run of at
/// least `consec_required` consecutive confident windows that agree; frames
/// already claimed by an earlier run keep their label.
pub fn decide(
    period: ActivityPeriod,
    scores: ArrayView2<f64>,
    covers: &[(usize, usize)],
    thresholds: Thresholds,
    config: &WindowConfig,
) -> Vec<GestureAnnotation> {
    let rows: Vec<Vec<f64>> = scores.rows().into_iter().map(|r| r.to_vec()).collect();
    if period.len() <= config.short_period_max {
        let votes: Vec<u8> = rows.iter().filter_map(|r| vote(r, thresholds.short)).collect();
        return majority(&votes)
            .map(|class_id| {
                vec![GestureAnnotation {
                    class_id,
                    start_frame: period.start,
                    end_frame: period.end,
                }]
            })
            .unwrap_or_default();
    }

    let votes: Vec<Option<u8>> = rows.iter().map(|r| vote(r, thresholds.long)).collect();
    let mut frames = vec![0u8; period.len()];
    for (v, first, last) in runs(&votes) {
        let Some(class) = v else { continue };
        if last - first + 1 < config.consec_required {
            continue;
        }
        for &(a, b) in &covers[first..=last] {
            for f in a.max(period.start)..=b.min(period.end) {
                let slot = &mut frames[f - period.start];
                if *slot == 0 {
                    *slot = class;
                }
            }
        }
    }
    runs(&frames)
        .into_iter()
        .filter(|&(c, _, _)| c != 0)
        .map(|(class_id, s, e)| GestureAnnotation {
            class_id,
            start_frame: period.start + s,
            end_frame: period.start + e,
        })
        .collect()
}

/// The class holding more than half of the votes, if any.
pub fn majority(votes: &[u8]) -> Option<u8> {
    let mut counts = [0usize; 256];
    for &v in votes {
        counts[usize::from(v)] += 1;
    }
    let (class, &count) = counts.iter().enumerate().max_by_key(|&(c, n)| (*n, std::cmp::Reverse(c)))?;
    (2 * count > votes.len()).then_some(class as u8)
}

/// Fused scores `Σ wᵢ · scoresᵢ`, without renormalization.
pub fn fuse_scores(scores: &[Array2<f64>], weights: &[f64]) -> Result<Array2<f64>> {
    let first = scores.first().ok_or_else(|| Error::invalid("nothing to fuse"))?;
    if scores.len() != weights.len() {
        return Err(Error::Shape {
            what: "fusion weights",
            expected: scores.len(),
            got: weights.len(),
        });
    }
    let mut out = Array2::zeros(first.dim());
    for (s, &w) in scores.iter().zip(weights) {
        if s.dim() != first.dim() {
            return Err(Error::invalid("fused score matrices differ in shape"));
        }
        out.scaled_add(w, s);
    }
    Ok(out)
}

pub fn classify_period_method_a(
    model: &NetworkModel,
    descriptors: ArrayView2<f64>,
    period: ActivityPeriod,
    method: &MethodAConfig,
    config: &WindowConfig,
) -> Result<Vec<GestureAnnotation>> {
    let poses = extract_dynamic_poses(descriptors, period, method.scale_step, config)?;
    let scores = window_scores(model, &poses)?;
    Ok(decide(period, scores.view(), &poses.covers, method.thresholds, config))
}

/// `models` are ordered like `method.scale_steps`. Window coverage is that
/// of the widest scale.
pub fn classify_period_method_b(
    models: &[NetworkModel; 3],
    descriptors: ArrayView2<f64>,
    period: ActivityPeriod,
    method: &MethodBConfig,
    config: &WindowConfig,
) -> Result<Vec<GestureAnnotation>> {
    let sets = extract_aligned_poses(descriptors, period, &method.scale_steps, config)?;
    let scores = models
        .iter()
        .zip(&sets)
        .map(|(m, p)| window_scores(m, p))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_scores(&scores, &method.weights)?;
    let widest = (0..3).max_by_key(|&i| (method.scale_steps[i], std::cmp::Reverse(i))).expect("3 scales");
    Ok(decide(period, fused.view(), &sets[widest].covers, method.thresholds, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn period(start: usize, end: usize) -> ActivityPeriod {
        ActivityPeriod { start, end }
    }

    fn ramp(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, DESCRIPTOR_WIDTH), |(t, c)| t as f64 + c as f64 * 0.001)
    }

    #[test]
    fn resize_identity_and_linear() {
        let mut rng = SplitMix64::new(1);
        let d = Array2::from_shape_simple_fn((9, 4), || rng.normal());
        let same = cubic_resize(d.view(), 9).unwrap();
        for (a, b) in same.iter().zip(d.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let up = cubic_resize(d.view(), 17).unwrap();
        for c in 0..4 {
            assert!((up[[0, c]] - d[[0, c]]).abs() < 1e-12);
            assert!((up[[16, c]] - d[[8, c]]).abs() < 1e-12);
            // 17 points over 8 intervals: every second sample is a knot
            for k in 0..9 {
                assert!((up[[2 * k, c]] - d[[k, c]]).abs() < 1e-12);
            }
        }
        let lin = Array2::from_shape_fn((6, 2), |(t, c)| 3.0 * t as f64 - c as f64);
        let r = cubic_resize(lin.view(), 23).unwrap();
        for k in 0..23 {
            let x = k as f64 * 5.0 / 22.0;
            assert!((r[[k, 0]] - 3.0 * x).abs() < 1e-12);
        }
        assert!(cubic_resize(lin.slice(s![0..1, ..]), 5).is_err());
    }

    #[test]
    fn spline_matches_natural_spline_reference() {
        // Reference values from an independent natural cubic spline.
        let y = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = cubic_resize(y.view(), 7).unwrap();
        for (a, b) in r.iter().zip([0.0, 0.75, 1.0, 0.5, 0.0, 0.25, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = Array2::from_shape_vec((7, 1), vec![0.3, -1.2, 2.5, 0.7, 0.0, 1.1, -0.4]).unwrap();
        let r = cubic_resize(y.view(), 11).unwrap();
        let expected = [
            0.3, -1.28996923, -0.59593846, 1.98732308, 2.32403077, 0.7, -0.12316923, 0.22972308, 1.00966154, 0.79563077, -0.4,
        ];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn short_period_resized_to_five_windows() {
        let d = ramp(40);
        let cfg = WindowConfig::default();
        let p = extract_dynamic_poses(d.view(), period(10, 18), 4, &cfg).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.poses.ncols(), 549);
        assert!(p.covers.iter().all(|&(a, b)| a >= 10 && b <= 18));
        assert_eq!(p.covers[0].0, 10);
        assert_eq!(p.covers[4].1, 18);

        let p = extract_dynamic_poses(d.view(), period(0, 24), 4, &cfg).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.centers, vec![4, 6, 8, 10, 12, 14, 16, 18, 20]);
        // window k samples frames 2k, 2k+4, 2k+8
        assert_eq!(p.poses[[3, 0]], 6.0);
        assert_eq!(p.poses[[3, 183]], 10.0);
        assert_eq!(p.poses[[3, 366]], 14.0);
    }

    #[test]
    fn aligned_scales_share_centres() {
        let d = ramp(60);
        let sets = extract_aligned_poses(d.view(), period(5, 40), &[4, 3, 2], &WindowConfig::default()).unwrap();
        assert_eq!(sets[0].centers, sets[1].centers);
        assert_eq!(sets[0].centers, sets[2].centers);
        // scale-2 window around centre c samples c-2, c, c+2
        let c = sets[2].centers[0] as f64;
        assert_eq!(sets[2].poses[[0, 0]], c - 2.0);
        assert_eq!(sets[2].poses[[0, 183]], c);
    }

    fn scores_for(classes: &[Option<usize>]) -> Array2<f64> {
        Array2::from_shape_fn((classes.len(), N_GESTURES), |(i, c)| match classes[i] {
            Some(k) if k == c => 0.95,
            Some(_) => 0.05 / 19.0,
            None => 0.05,
        })
    }

    #[test]
    fn short_rule_needs_absolute_majority() {
        let cfg = WindowConfig::default();
        let p = period(0, 30);
        let covers = vec![(0, 8); 4];
        let s = scores_for(&[Some(2), Some(2), Some(2), Some(6)]);
        let out = decide(p, s.view(), &covers, Thresholds::METHOD_A, &cfg);
        assert_eq!(out, vec![GestureAnnotation { class_id: 3, start_frame: 0, end_frame: 30 }]);
        let s = scores_for(&[Some(2), Some(2), Some(6), Some(6)]);
        assert!(decide(p, s.view(), &covers, Thresholds::METHOD_A, &cfg).is_empty());
        let s = scores_for(&[None, None]);
        assert!(decide(p, s.view(), &covers[..2], Thresholds::METHOD_A, &cfg).is_empty());
    }

    #[test]
    fn long_rule_labels_consecutive_runs() {
        let cfg = WindowConfig::default();
        let p = period(100, 160);
        let covers: Vec<(usize, usize)> = (0..10).map(|k| (100 + 2 * k, 108 + 2 * k)).collect();
        let mut cls = vec![Some(4), Some(4), Some(4), Some(1)];
        cls.extend([None; 6]);
        let s = scores_for(&cls);
        let out = decide(p, s.view(), &covers, Thresholds::METHOD_A, &cfg);
        assert_eq!(out, vec![GestureAnnotation { class_id: 5, start_frame: 100, end_frame: 112 }]);
        // two agreeing windows are not enough
        let s = scores_for(&[Some(4), Some(4), None, Some(4), Some(4)]);
        assert!(decide(p, s.view(), &covers[..5], Thresholds::METHOD_A, &cfg).is_empty());
    }

    #[test]
    fn short_long_routing_boundary() {
        let cfg = WindowConfig::default();
        // alternating votes: the short rule rejects, the long rule needs runs
        let cls: Vec<Option<usize>> = vec![Some(1), Some(1), Some(1), Some(1), Some(2), Some(2)];
        let s = scores_for(&cls);
        let covers: Vec<(usize, usize)> = (0..6).map(|k| (2 * k, 2 * k + 8)).collect();
        let short = decide(period(0, 53), s.view(), &covers, Thresholds::METHOD_A, &cfg);
        assert_eq!(short, vec![GestureAnnotation { class_id: 2, start_frame: 0, end_frame: 53 }]);
        let long = decide(period(0, 54), s.view(), &covers, Thresholds::METHOD_A, &cfg);
        assert_eq!(long, vec![GestureAnnotation { class_id: 2, start_frame: 0, end_frame: 14 }]);
    }

    #[test]
    fn threshold_uses_raw_scores() {
        let cfg = WindowConfig::default();
        let covers = vec![(0, 8); 3];
        let s = scores_for(&[Some(0), Some(0), Some(0)]);
        assert_eq!(decide(period(0, 20), s.view(), &covers, Thresholds::METHOD_A, &cfg).len(), 1);
        // same argmax, scaled below the threshold
        let scaled = &s * 0.9;
        assert!(decide(period(0, 20), scaled.view(), &covers, Thresholds::METHOD_A, &cfg).is_empty());
    }

    #[test]
    fn fusion_is_linear() {
        let m = MethodBConfig::default();
        let mut rng = SplitMix64::new(4);
        let v = Array2::from_shape_simple_fn((3, N_GESTURES), || rng.next_f64());
        let f = fuse_scores(&[v.clone(), v.clone(), v.clone()], &m.weights).unwrap();
        let total: f64 = m.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (a, b) in f.iter().zip(v.iter()) {
            assert!((a - total * b).abs() < 1e-12);
        }
        let w = Array2::from_shape_simple_fn((3, N_GESTURES), || rng.next_f64());
        let two = fuse_scores(&[v.clone(), w.clone()], &[0.4895, 0.4576]).unwrap();
        let three = fuse_scores(&[v, w, Array2::from_elem((3, N_GESTURES), 9.0)], &[0.4895, 0.4576, 0.0]).unwrap();
        assert_eq!(two, three);
    }

    #[test]
    fn classifier_size() {
        assert_eq!(WindowConfig::default().spec().param_count(), 197_120);
    }

    proptest! {
        #[test]
        fn window_count_formula(len in 9usize..300) {
            let d = ramp(len);
            let p = extract_dynamic_poses(d.view(), period(0, len - 1), 4, &WindowConfig::default()).unwrap();
            prop_assert_eq!(p.len(), ((len - 9) / 2 + 1).max(5));
            for &(a, b) in &p.covers {
                prop_assert!(a <= b && b < len);
            }
        }

        #[test]
        fn majority_is_strict(votes in prop::collection::vec(1u8..4, 0..12)) {
            match majority(&votes) {
                Some(c) => prop_assert!(2 * votes.iter().filter(|&&v| v == c).count() > votes.len()),
                None => for c in 1u8..4 {
                    prop_assert!(2 * votes.iter().filter(|&&v| v == c).count() <= votes.len());
                },
            }
        }
    }
}
