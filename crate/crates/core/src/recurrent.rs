//! Simultaneous segmentation and classification with a bidirectional LSTM.
//!
//! Training slides a 10-frame window over each sequence (5-frame steps over
//! pure rest, 2-frame steps elsewhere) with per-frame class targets. At
//! inference the sequence is tiled into non-overlapping windows, per-class
//! scores are smoothed, and short label runs are suppressed.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::descriptor::{FeatureStats, DESCRIPTOR_WIDTH};
use crate::error::{Error, Result};
use crate::nn::lstm::SeqBatch;
use crate::nn::sgdm::BatchObjective;
use crate::nn::{argmax, train_sgdm, Activation, Architecture, BiLstmNet, LstmLayerSpec, LstmStackSpec, NetworkModel, SgdmConfig, SgdmOutcome};
use crate::rng::SplitMix64;
use crate::skeleton::{runs, FrameLabels};
use crate::smoothing::{loess_smooth, validate_span, DEFAULT_LOESS_SPAN};
use crate::N_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnConfig {
    pub hidden: Vec<usize>,
    /// Dropout after every layer but the last.
    pub dropout: f64,
    pub leaky_slope: f64,
    pub window_len: usize,
    pub rest_step: usize,
    pub active_step: usize,
    pub min_run: usize,
    pub loess_span: usize,
    pub init_seed: u64,
    pub sgdm: SgdmConfig,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 1024, 512],
            dropout: 0.6,
            leaky_slope: 0.01,
            window_len: 10,
            rest_step: 5,
            active_step: 2,
            min_run: 15,
            loess_span: DEFAULT_LOESS_SPAN,
            init_seed: 3,
            sgdm: SgdmConfig::default(),
        }
    }
}

impl RnnConfig {
    /// Shrunken stack for desk-scale runs.
    pub fn desk() -> Self {
        Self {
            hidden: vec![64, 64, 32],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("RNN layer sizes must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return Err(Error::invalid("leaky slope must be finite and >= 0"));
        }
        if self.window_len == 0 || self.rest_step == 0 || self.active_step == 0 || self.min_run == 0 {
            return Err(Error::invalid("window length, steps and min_run must be positive"));
        }
        validate_span(self.loess_span)?;
        self.sgdm.validate()
    }

    pub fn spec(&self) -> LstmStackSpec {
        let last = self.hidden.len() - 1;
        LstmStackSpec {
            input: DESCRIPTOR_WIDTH,
            layers: self
                .hidden
                .iter()
                .enumerate()
                .map(|(i, &hidden)| LstmLayerSpec {
                    hidden,
                    activation: if i < last { Activation::LeakyRelu(self.leaky_slope) } else { Activation::Identity },
                    dropout: if i < last { self.dropout } else { 0.0 },
                })
                .collect(),
            output: N_CLASSES,
        }
    }
}

/// A fixed-length slice of descriptors with per-frame targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainWindow {
    pub data: Array2<f64>,
    pub targets: Vec<u8>,
}

/// Start frames of the training windows: the window advances by `rest_step`
/// when all its frames are rest, otherwise by `active_step`.
pub fn train_window_starts(labels: &[u8], config: &RnnConfig) -> Vec<usize> {
    let w = config.window_len;
    let mut starts = Vec::new();
    let mut t = 0;
    while t + w <= labels.len() {
        starts.push(t);
        t += if labels[t..t + w].iter().all(|&l| l == 0) {
            config.rest_step
        } else {
            config.active_step
        };
    }
    starts
}

pub fn extract_train_windows(descriptors: ArrayView2<f64>, labels: &FrameLabels, config: &RnnConfig) -> Result<Vec<TrainWindow>> {
    if descriptors.nrows() != labels.len() {
        return Err(Error::Shape {
            what: "descriptor rows vs labels",
            expected: labels.len(),
            got: descriptors.nrows(),
        });
    }
    let w = config.window_len;
    Ok(train_window_starts(labels.as_slice(), config)
        .into_iter()
        .map(|t| TrainWindow {
            data: descriptors.slice(s![t..t + w, ..]).to_owned(),
            targets: labels.as_slice()[t..t + w].to_vec(),
        })
        .collect())
}

struct WindowObjective<'a> {
    spec: &'a LstmStackSpec,
    windows: &'a [TrainWindow],
}

impl BatchObjective for WindowObjective<'_> {
    fn n_samples(&self) -> usize {
        self.windows.len()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[usize], rng: &mut SplitMix64) -> Result<(f64, Vec<f64>)> {
        let views: Vec<_> = batch.iter().map(|&i| self.windows[i].data.view()).collect();
        let seq = SeqBatch::stack(&views)?;
        let mut targets = vec![0usize; seq.steps * seq.batch];
        for (b, &i) in batch.iter().enumerate() {
            for (t, &c) in self.windows[i].targets.iter().enumerate() {
                targets[t * seq.batch + b] = usize::from(c);
            }
        }
        let net = BiLstmNet {
            spec: self.spec.clone(),
            params: params.to_vec(),
        };
        net.gradient(&seq, &targets, Some(rng))
    }
}

/// Trains the stack with SGDM. `on_epoch` sees (epoch, mean loss).
pub fn train_rnn(
    windows: &[TrainWindow],
    stats: Option<FeatureStats>,
    config: &RnnConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(NetworkModel, SgdmOutcome)> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Missing("no training windows".into()));
    }
    let spec = config.spec();
    let net = BiLstmNet::init(spec.clone(), &mut SplitMix64::new(config.init_seed))?;
    let objective = WindowObjective { spec: &spec, windows };
    let outcome = train_sgdm(&objective, net.params, &config.sgdm, on_epoch)?;
    let net = BiLstmNet::new(spec, outcome.params.clone())?;
    let model = NetworkModel::new(Architecture::BiLstm(net), stats).with_meta("role", "recurrent-labeler");
    Ok((model, outcome))
}

/// Non-overlapping tiling of `len` frames into windows of `window_len`; the
/// remainder is its own shorter window.
pub fn inference_tiles(len: usize, window_len: usize) -> Vec<(usize, usize)> {
    (0..len).step_by(window_len.max(1)).map(|s| (s, (s + window_len).min(len))).collect()
}

/// Per-frame class probabilities (frames × 21) over the tiled windows.
pub fn frame_probabilities(model: &NetworkModel, descriptors: ArrayView2<f64>, window_len: usize) -> Result<Array2<f64>> {
    let net = model.as_bilstm()?;
    let n = descriptors.nrows();
    let mut out = Array2::zeros((n, net.spec.output));
    let tiles = inference_tiles(n, window_len);
    let full: Vec<_> = tiles.iter().filter(|(a, b)| b - a == window_len).copied().collect();
    if !full.is_empty() {
        let views: Vec<_> = full.iter().map(|&(a, b)| descriptors.slice(s![a..b, ..])).collect();
        let batch = SeqBatch::stack(&views)?;
        let p = net.forward(&batch, None)?;
        for (b, &(a, _)) in full.iter().enumerate() {
            for (t, r) in batch.rows_of(b).enumerate() {
                out.row_mut(a + t).assign(&p.row(r));
            }
        }
    }
    for &(a, b) in tiles.iter().filter(|(a, b)| b - a != window_len) {
        let p = net.predict(descriptors.slice(s![a..b, ..]))?;
        out.slice_mut(s![a..b, ..]).assign(&p);
    }
    Ok(out)
}

/// Resets every nonzero run shorter than `min_run` frames to rest.
pub fn suppress_short_runs(labels: &mut [u8], min_run: usize) {
    for (c, a, b) in runs(labels) {
        if c != 0 && b - a + 1 < min_run {
            labels[a..=b].fill(0);
        }
    }
}

pub fn label_sequence(model: &NetworkModel, descriptors: ArrayView2<f64>, config: &RnnConfig) -> Result<FrameLabels> {
    let mut probs = frame_probabilities(model, descriptors, config.window_len)?;
    for mut col in probs.axis_iter_mut(Axis(1)) {
        let smoothed = loess_smooth(&col.to_vec(), config.loess_span)?;
        col.iter_mut().zip(smoothed).for_each(|(d, v)| *d = v);
    }
    let mut labels: Vec<u8> = probs
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("row-major")) as u8)
        .collect();
    suppress_short_runs(&mut labels, config.min_run);
    FrameLabels::new(labels)
}
