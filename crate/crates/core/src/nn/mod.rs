//! Minimal neural-network engine: dense stacks, bidirectional LSTM stacks,
//! analytic gradients, and the two optimizers used for training (scaled
//! conjugate gradient for full-batch MLPs, momentum SGD for the recurrent
//! labeler).

pub mod lstm;
pub mod mlp;
pub mod model;
pub mod scg;
pub mod sgdm;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use lstm::{BiLstmNet, LstmLayerSpec, LstmStackSpec};
pub use mlp::{Mlp, MlpSpec};
pub use model::{Architecture, NetworkModel};
pub use scg::{train_scg, ScgConfig, ScgOutcome};
pub use sgdm::{train_sgdm, SgdmConfig, SgdmOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    /// Apply in place to a batch of pre-activations (one row per sample).
    pub fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
            Activation::LeakyRelu(s) => z.mapv_inplace(|x| if x > 0.0 { x } else { s * x }),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Softmax => softmax_rows(z.view_mut()),
        }
    }

    /// Elementwise derivative, given pre-activation `z` and output `a`.
    /// Not defined for softmax (only used as an output paired with its loss).
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Softmax => unreachable!("softmax derivative is folded into the loss"),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => f.write_str("identity"),
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu(s) => write!(f, "leaky_relu:{s}"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::Softmax => f.write_str("softmax"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            _ => match s.strip_prefix("leaky_relu:") {
                Some(slope) => Activation::LeakyRelu(
                    slope
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad leaky slope {slope:?}")))?,
                ),
                None => return Err(Error::invalid(format!("unknown activation {s:?}"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    BinaryCrossEntropy,
    CategoricalCrossEntropy,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::BinaryCrossEntropy => "binary-cross-entropy",
            Loss::CategoricalCrossEntropy => "categorical-cross-entropy",
        }
    }

    pub fn output_activation(self) -> Activation {
        match self {
            Loss::BinaryCrossEntropy => Activation::Sigmoid,
            Loss::CategoricalCrossEntropy => Activation::Softmax,
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-cross-entropy" => Ok(Loss::BinaryCrossEntropy),
            "categorical-cross-entropy" => Ok(Loss::CategoricalCrossEntropy),
            _ => Err(Error::invalid(format!("unknown loss {s:?}"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, shifted by the row max.
pub fn softmax_rows(mut z: ArrayViewMut2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
}

/// Per-row loss from logits `z` against targets `t`.
///
/// Binary: `softplus(z) - t z` (one output column). Categorical:
/// `logsumexp(z) * Σt - Σ t z`.
pub(crate) fn row_losses(loss: Loss, z: ArrayView2<f64>, t: ArrayView2<f64>) -> Vec<f64> {
    z.rows()
        .into_iter()
        .zip(t.rows())
        .map(|(zr, tr)| match loss {
            Loss::BinaryCrossEntropy => zr
                .iter()
                .zip(tr.iter())
                .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
                .sum(),
            Loss::CategoricalCrossEntropy => {
                let m = zr.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + zr.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                let tsum: f64 = tr.sum();
                lse * tsum - zr.iter().zip(tr.iter()).map(|(z, t)| z * t).sum::<f64>()
            }
        })
        .collect()
}

/// Scale `grad` so its Euclidean norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if n > max_norm && n > 0.0 {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub(crate) fn fill_uniform_fan(dst: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut SplitMix64) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in dst.iter_mut() {
        *w = rng.uniform(-limit, limit);
    }
}

/// One-hot rows for class indices.
pub fn one_hot(classes: &[usize], width: usize) -> Result<Array2<f64>> {
    let mut t = Array2::zeros((classes.len(), width));
    for (i, &c) in classes.iter().enumerate() {
        if c >= width {
            return Err(Error::invalid(format!("class {c} outside 0..{width}")));
        }
        t[[i, c]] = 1.0;
    }
    Ok(t)
}

/// Copies `a` into `dst` in logical row-major order, whatever its memory layout.
pub(crate) fn copy_logical(dst: &mut [f64], a: &Array2<f64>) {
    for (d, v) in dst.iter_mut().zip(a.iter()) {
        *d = *v;
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_names_round_trip() {
        for a in [
            Activation::Identity,
            Activation::Relu,
            Activation::LeakyRelu(0.01),
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Softmax,
        ] {
            assert_eq!(a.to_string().parse::<Activation>().unwrap(), a);
        }
        assert!("swish".parse::<Activation>().is_err());
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut a = ndarray::array![[0.3, -1.2, 2.0, 0.0]];
        let mut b = a.mapv(|x| x + 123.25);
        softmax_rows(a.view_mut());
        softmax_rows(b.view_mut());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0, 12.0];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 13.0);
        let after = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(after <= 1.0 + 1e-12);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn stable_losses() {
        let z = ndarray::array![[800.0], [-800.0]];
        let t = ndarray::array![[1.0], [0.0]];
        let l = row_losses(Loss::BinaryCrossEntropy, z.view(), t.view());
        assert!(l.iter().all(|x| x.abs() < 1e-300));
        let z = ndarray::array![[1000.0, 0.0]];
        let t = ndarray::array![[0.0, 1.0]];
        let l = row_losses(Loss::CategoricalCrossEntropy, z.view(), t.view());
        assert!((l[0] - 1000.0).abs() < 1e-9);
    }
}
