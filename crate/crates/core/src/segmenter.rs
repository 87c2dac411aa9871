//! Frame-wise activity detection.
//!
//! A small MLP scores every frame as gesture vs rest. Scores are smoothed by
//! LOESS, thresholded, and runs that are too short to be a gesture are dropped.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::descriptor::{FeatureStats, DESCRIPTOR_WIDTH};
use crate::error::{Error, Result};
use crate::nn::mlp::fit_mlp_scg;
use crate::nn::{Activation, Architecture, Loss, Mlp, MlpSpec, NetworkModel, ScgConfig, ScgOutcome};
use crate::rng::SplitMix64;
use crate::skeleton::{runs, FrameLabels};
pub use crate::smoothing::loess_smooth;
use crate::smoothing::{validate_span, DEFAULT_LOESS_SPAN};

/// Inclusive frame interval the segmenter marks as activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivityPeriod {
    pub start: usize,
    pub end: usize,
}

impl ActivityPeriod {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    /// A frame is active when its smoothed score is strictly above this.
    pub threshold: f64,
    pub min_period: usize,
    pub loess_span: usize,
    /// Rest frames this close to a gesture are negative candidates. `None`
    /// uses the length of the neighbouring gesture.
    pub negative_margin: Option<usize>,
    pub hidden: (usize, usize),
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            threshold: 0.4,
            min_period: 12,
            loess_span: DEFAULT_LOESS_SPAN,
            negative_margin: None,
            hidden: (100, 100),
            max_iterations: 300,
            seed: 1,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("segmenter threshold {} outside (0, 1)", self.threshold)));
        }
        if self.min_period == 0 {
            return Err(Error::invalid("min_period must be at least 1"));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::invalid("segmenter hidden sizes must be positive"));
        }
        validate_span(self.loess_span)
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            sizes: vec![DESCRIPTOR_WIDTH, self.hidden.0, self.hidden.1, 1],
            activations: vec![Activation::Relu, Activation::Tanh, Activation::Sigmoid],
            loss: Loss::BinaryCrossEntropy,
        }
    }
}

/// Gesture frames and near-boundary rest frames of one sequence.
pub fn binary_candidates(labels: &FrameLabels, margin: Option<usize>) -> (Vec<usize>, Vec<usize>) {
    let l = labels.as_slice();
    let positives: Vec<usize> = (0..l.len()).filter(|&i| l[i] != 0).collect();
    let mut near = vec![false; l.len()];
    for a in labels.to_annotations() {
        let m = margin.unwrap_or(a.len());
        near[a.start_frame.saturating_sub(m)..a.start_frame].fill(true);
        near[(a.end_frame + 1).min(l.len())..(a.end_frame + 1 + m).min(l.len())].fill(true);
    }
    let negatives = (0..l.len()).filter(|&i| near[i] && l[i] == 0).collect();
    (positives, negatives)
}

/// Stacks all gesture frames (target 1) and an equal number of rest frames
/// drawn from the near-boundary candidates (target 0).
pub fn build_binary_training_set(
    sequences: &[(ArrayView2<f64>, &FrameLabels)],
    config: &SegmenterConfig,
    rng: &mut SplitMix64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (s, (d, labels)) in sequences.iter().enumerate() {
        if d.nrows() != labels.len() {
            return Err(Error::Shape {
                what: "descriptor rows vs labels",
                expected: labels.len(),
                got: d.nrows(),
            });
        }
        let (p, n) = binary_candidates(labels, config.negative_margin);
        pos.extend(p.into_iter().map(|i| (s, i)));
        neg.extend(n.into_iter().map(|i| (s, i)));
    }
    if pos.is_empty() {
        return Err(Error::Missing("no gesture frames to train the segmenter".into()));
    }
    rng.shuffle(&mut neg);
    neg.truncate(pos.len());
    neg.sort_unstable();

    let width = sequences[0].0.ncols();
    let mut inputs = Array2::zeros((pos.len() + neg.len(), width));
    let mut targets = Array2::zeros((pos.len() + neg.len(), 1));
    for (row, &(s, i)) in pos.iter().chain(&neg).enumerate() {
        inputs.row_mut(row).assign(&sequences[s].0.row(i));
        targets[[row, 0]] = if row < pos.len() { 1.0 } else { 0.0 };
    }
    Ok((inputs, targets))
}

/// Trains the activity network with SCG. The model keeps `stats` so that
/// inference can rebuild standardized descriptors.
pub fn train_segmenter(
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    stats: Option<FeatureStats>,
    config: &SegmenterConfig,
) -> Result<(NetworkModel, ScgOutcome)> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut mlp = Mlp::init(config.spec(), &mut rng)?;
    let scg = ScgConfig {
        max_iterations: config.max_iterations,
        ..Default::default()
    };
    let outcome = fit_mlp_scg(&mut mlp, inputs, targets, &scg)?;
    let model = NetworkModel::new(Architecture::Mlp(mlp), stats).with_meta("role", "segmenter");
    Ok((model, outcome))
}

/// Raw per-frame activity probabilities.
pub fn frame_scores(model: &NetworkModel, descriptors: ArrayView2<f64>) -> Result<Vec<f64>> {
    let mlp = model.as_mlp()?;
    if mlp.spec.output_width() != 1 {
        return Err(Error::ModelMismatch("segmenter must have a single output".into()));
    }
    Ok(mlp.forward(descriptors)?.index_axis(Axis(1), 0).to_vec())
}

/// Maximal runs strictly above the threshold that last at least
/// `min_period` frames.
pub fn extract_periods(scores: &[f64], config: &SegmenterConfig) -> Vec<ActivityPeriod> {
    let active: Vec<bool> = scores.iter().map(|&s| s > config.threshold).collect();
    runs(&active)
        .into_iter()
        .filter(|&(on, s, e)| on && e - s + 1 >= config.min_period)
        .map(|(_, start, end)| ActivityPeriod { start, end })
        .collect()
}

/// Score, smooth and threshold one sequence of standardized descriptors.
pub fn segment(model: &NetworkModel, descriptors: ArrayView2<f64>, config: &SegmenterConfig) -> Result<Vec<ActivityPeriod>> {
    let scores = frame_scores(model, descriptors)?;
    let smoothed = loess_smooth(&scores, config.loess_span)?;
    Ok(extract_periods(&smoothed, config))
}

pub fn periods_to_activity(periods: &[ActivityPeriod], len: usize) -> Vec<bool> {
    let mut out = vec![false; len];
    for p in periods {
        for v in &mut out[p.start..=p.end.min(len.saturating_sub(1))] {
            *v = true;
        }
    }
    out
}
