//! Stacked bidirectional LSTM with a per-frame softmax head.
//!
//! Each layer runs a forward-in-time and a backward-in-time LSTM over the
//! same input and concatenates their hidden states (forward first). An
//! optional elementwise activation and inverted dropout follow each layer.
//! A dense softmax layer then scores every frame.
//!
//! Parameter layout, per layer and per direction (forward, then backward):
//! input weights `4H × D`, recurrent weights `4H × H`, biases `4H`, with
//! gate blocks ordered input, forget, candidate, output. The dense head
//! (`out × 2H_last` weights, then `out` biases) comes last.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::{copy_logical, fill_uniform_fan, row_losses, sigmoid, softmax_rows, Activation, Loss};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerSpec {
    pub hidden: usize,
    /// Applied to the concatenated bidirectional output: identity or leaky ReLU.
    pub activation: Activation,
    /// Inverted-dropout probability applied to this layer's output.
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStackSpec {
    pub input: usize,
    pub layers: Vec<LstmLayerSpec>,
    pub output: usize,
}

/// Offsets of one direction's parameter blocks.
#[derive(Debug, Clone, Copy)]
struct DirLayout {
    wx: usize,
    wh: usize,
    b: usize,
    input: usize,
    hidden: usize,
}

impl LstmStackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("LSTM stack needs at least one layer"));
        }
        if self.input == 0 || self.output == 0 || self.layers.iter().any(|l| l.hidden == 0) {
            return Err(Error::invalid("LSTM widths must be positive"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::invalid(format!("layer {i}: dropout {} outside [0, 1)", l.dropout)));
            }
            if !matches!(l.activation, Activation::Identity | Activation::LeakyRelu(_)) {
                return Err(Error::invalid(format!(
                    "layer {i}: post activation must be identity or leaky_relu, got {}",
                    l.activation
                )));
            }
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input
        } else {
            2 * self.layers[l - 1].hidden
        }
    }

    fn dir_layouts(&self) -> Vec<[DirLayout; 2]> {
        let mut off = 0;
        (0..self.layers.len())
            .map(|l| {
                let d = self.layer_input(l);
                let h = self.layers[l].hidden;
                std::array::from_fn(|_| {
                    let lay = DirLayout {
                        wx: off,
                        wh: off + 4 * h * d,
                        b: off + 4 * h * d + 4 * h * h,
                        input: d,
                        hidden: h,
                    };
                    off += 4 * h * (d + h + 1);
                    lay
                })
            })
            .collect()
    }

    fn dense_offset(&self) -> usize {
        (0..self.layers.len())
            .map(|l| 2 * 4 * self.layers[l].hidden * (self.layer_input(l) + self.layers[l].hidden + 1))
            .sum()
    }

    fn last_width(&self) -> usize {
        2 * self.layers.last().expect("validated").hidden
    }

    /// Closed form: Σ 2·4H(D + H + 1) + out·(2H_last + 1).
    pub fn param_count(&self) -> usize {
        self.dense_offset() + self.output * (self.last_width() + 1)
    }

    /// Named parameter blocks as (name, offset, rows, cols).
    pub fn layout(&self) -> Vec<(String, usize, usize, usize)> {
        let mut out = Vec::new();
        for (l, dirs) in self.dir_layouts().into_iter().enumerate() {
            for (d, lay) in dirs.iter().enumerate() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                let h4 = 4 * lay.hidden;
                out.push((format!("lstm{l}.{dir}.w_input"), lay.wx, h4, lay.input));
                out.push((format!("lstm{l}.{dir}.w_recurrent"), lay.wh, h4, lay.hidden));
                out.push((format!("lstm{l}.{dir}.bias"), lay.b, h4, 1));
            }
        }
        let d = self.dense_offset();
        let w = self.last_width();
        out.push(("dense.weight".into(), d, self.output, w));
        out.push(("dense.bias".into(), d + self.output * w, self.output, 1));
        out
    }
}

/// Equal-length sequences laid out time-major: row `t * batch + b` holds
/// frame `t` of sequence `b`.
#[derive(Debug, Clone)]
pub struct SeqBatch {
    pub steps: usize,
    pub batch: usize,
    pub data: Array2<f64>,
}

impl SeqBatch {
    pub fn single(seq: ArrayView2<f64>) -> Self {
        SeqBatch {
            steps: seq.nrows(),
            batch: 1,
            data: seq.to_owned(),
        }
    }

    /// Interleave sequences of identical length and width.
    pub fn stack(seqs: &[ArrayView2<f64>]) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::invalid("empty sequence batch"))?;
        let (steps, width) = first.dim();
        let batch = seqs.len();
        let mut data = Array2::zeros((steps * batch, width));
        for (b, s) in seqs.iter().enumerate() {
            if s.dim() != (steps, width) {
                return Err(Error::invalid("sequences in a batch must share length and width"));
            }
            for t in 0..steps {
                data.row_mut(t * batch + b).assign(&s.row(t));
            }
        }
        Ok(SeqBatch { steps, batch, data })
    }

    /// Rows for sequence `b`, in time order.
    pub fn rows_of(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.steps).map(move |t| t * self.batch + b)
    }
}

struct DirCache {
    /// Activated gates [i, f, g, o].
    gates: Array2<f64>,
    cell: Array2<f64>,
    hidden: Array2<f64>,
}

struct LayerCache {
    dirs: [DirCache; 2],
    pre: Array2<f64>,
    mask: Option<Array2<f64>>,
    out: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmNet {
    pub spec: LstmStackSpec,
    pub params: Vec<f64>,
}

impl BiLstmNet {
    pub fn new(spec: LstmStackSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::Shape {
                what: "biLSTM parameter vector",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(BiLstmNet { spec, params })
    }

    pub fn zeros(spec: LstmStackSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::new(spec, vec![0.0; n])
    }

    /// Fan-scaled uniform matrices, forget-gate bias 1, other biases 0.
    pub fn init(spec: LstmStackSpec, rng: &mut SplitMix64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for dirs in net.spec.dir_layouts() {
            for lay in dirs {
                let h4 = 4 * lay.hidden;
                fill_uniform_fan(&mut net.params[lay.wx..lay.wx + h4 * lay.input], lay.input, h4, rng);
                fill_uniform_fan(&mut net.params[lay.wh..lay.wh + h4 * lay.hidden], lay.hidden, h4, rng);
                net.params[lay.b + lay.hidden..lay.b + 2 * lay.hidden].fill(1.0);
            }
        }
        let d = net.spec.dense_offset();
        let w = net.spec.last_width();
        let o = net.spec.output;
        fill_uniform_fan(&mut net.params[d..d + o * w], w, o, rng);
        Ok(net)
    }

    /// Per-frame class probabilities, rows in the batch's time-major order.
    /// Dropout is sampled only when `dropout_rng` is given (training mode).
    pub fn forward(&self, batch: &SeqBatch, dropout_rng: Option<&mut SplitMix64>) -> Result<Array2<f64>> {
        let (_, mut logits) = self.run(batch, dropout_rng)?;
        softmax_rows(logits.view_mut());
        Ok(logits)
    }

    /// Convenience for one sequence (frames × input width).
    pub fn predict(&self, seq: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(&SeqBatch::single(seq), None)
    }

    fn check_input(&self, batch: &SeqBatch) -> Result<()> {
        if batch.data.ncols() != self.spec.input {
            return Err(Error::Shape {
                what: "biLSTM input width",
                expected: self.spec.input,
                got: batch.data.ncols(),
            });
        }
        if batch.steps == 0 || batch.data.nrows() != batch.steps * batch.batch {
            return Err(Error::invalid("malformed sequence batch"));
        }
        Ok(())
    }

    fn run(&self, batch: &SeqBatch, mut rng: Option<&mut SplitMix64>) -> Result<(Vec<LayerCache>, Array2<f64>)> {
        self.check_input(batch)?;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.spec.layers.len());
        for (l, dirs) in self.spec.dir_layouts().into_iter().enumerate() {
            let x = if l == 0 { batch.data.view() } else { caches[l - 1].out.view() };
            let fwd = self.direction_forward(x, &dirs[0], batch, true);
            let bwd = self.direction_forward(x, &dirs[1], batch, false);
            let pre = ndarray::concatenate(Axis(1), &[fwd.hidden.view(), bwd.hidden.view()]).expect("same rows");
            let spec = &self.spec.layers[l];
            let mut out = pre.clone();
            spec.activation.apply(&mut out);
            let mask = match rng.as_deref_mut() {
                Some(r) if spec.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - spec.dropout);
                    let m = Array2::from_shape_simple_fn(out.dim(), || if r.next_f64() < spec.dropout { 0.0 } else { keep });
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            caches.push(LayerCache {
                dirs: [fwd, bwd],
                pre,
                mask,
                out,
            });
        }
        let (dw, db) = self.dense_views();
        let logits = caches.last().expect("layers").out.dot(&dw.t()) + db;
        Ok((caches, logits))
    }

    fn dense_views(&self) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let d = self.spec.dense_offset();
        let w = self.spec.last_width();
        let o = self.spec.output;
        (
            ArrayView2::from_shape((o, w), &self.params[d..d + o * w]).expect("layout"),
            ArrayView1::from(&self.params[d + o * w..d + o * w + o]),
        )
    }

    fn dir_views(&self, lay: &DirLayout) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let h4 = 4 * lay.hidden;
        (
            ArrayView2::from_shape((h4, lay.input), &self.params[lay.wx..lay.wx + h4 * lay.input]).expect("layout"),
            ArrayView2::from_shape((h4, lay.hidden), &self.params[lay.wh..lay.wh + h4 * lay.hidden]).expect("layout"),
            ArrayView1::from(&self.params[lay.b..lay.b + h4]),
        )
    }

    fn direction_forward(&self, x: ArrayView2<f64>, lay: &DirLayout, batch: &SeqBatch, forward: bool) -> DirCache {
        let (wx, wh, bias) = self.dir_views(lay);
        let (steps, nb, h) = (batch.steps, batch.batch, lay.hidden);
        let mut gates = x.dot(&wx.t()) + bias;
        let mut cell = Array2::<f64>::zeros((steps * nb, h));
        let mut hidden = Array2::<f64>::zeros((steps * nb, h));
        for step in 0..steps {
            let t = if forward { step } else { steps - 1 - step };
            let rows = t * nb..(t + 1) * nb;
            let prev = (step > 0).then(|| if forward { t - 1 } else { t + 1 });
            if let Some(p) = prev {
                let hp = hidden.slice(s![p * nb..(p + 1) * nb, ..]);
                let mut g = gates.slice_mut(s![rows.clone(), ..]);
                general_mat_mul(1.0, &hp, &wh.t(), 1.0, &mut g);
            }
            for b in 0..nb {
                let r = t * nb + b;
                for k in 0..h {
                    let i = sigmoid(gates[[r, k]]);
                    let f = sigmoid(gates[[r, h + k]]);
                    let g = gates[[r, 2 * h + k]].tanh();
                    let o = sigmoid(gates[[r, 3 * h + k]]);
                    let c_prev = prev.map_or(0.0, |p| cell[[p * nb + b, k]]);
                    let c = f * c_prev + i * g;
                    gates[[r, k]] = i;
                    gates[[r, h + k]] = f;
                    gates[[r, 2 * h + k]] = g;
                    gates[[r, 3 * h + k]] = o;
                    cell[[r, k]] = c;
                    hidden[[r, k]] = o * c.tanh();
                }
            }
        }
        DirCache { gates, cell, hidden }
    }

    /// Mean per-frame cross-entropy against class indices (time-major, one
    /// per batch row) and its gradient by backpropagation through time.
    pub fn gradient(&self, batch: &SeqBatch, targets: &[usize], dropout_rng: Option<&mut SplitMix64>) -> Result<(f64, Vec<f64>)> {
        let rows = batch.steps * batch.batch;
        if targets.len() != rows {
            return Err(Error::Shape {
                what: "per-frame targets",
                expected: rows,
                got: targets.len(),
            });
        }
        let (caches, logits) = self.run(batch, dropout_rng)?;
        let onehot = super::one_hot(targets, self.spec.output)?;
        let losses = row_losses(Loss::CategoricalCrossEntropy, logits.view(), onehot.view());
        if let Some(bad) = losses.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFinite(format!("loss at batch row {bad}")));
        }
        let loss = losses.iter().sum::<f64>() / rows as f64;

        let mut grad = vec![0.0; self.params.len()];
        let mut probs = logits;
        softmax_rows(probs.view_mut());
        let dlogits = (probs - &onehot) / rows as f64;

        // dense head
        let (dw, _) = self.dense_views();
        let last = caches.last().expect("layers");
        let d = self.spec.dense_offset();
        let w = self.spec.last_width();
        let o = self.spec.output;
        let gw = dlogits.t().dot(&last.out);
        copy_logical(&mut grad[d..d + o * w], &gw);
        for (g, v) in grad[d + o * w..d + o * w + o].iter_mut().zip(dlogits.sum_axis(Axis(0))) {
            *g = v;
        }
        let mut dout = dlogits.dot(&dw);

        let layouts = self.spec.dir_layouts();
        for l in (0..self.spec.layers.len()).rev() {
            let cache = &caches[l];
            let spec = &self.spec.layers[l];
            if let Some(m) = &cache.mask {
                dout *= m;
            }
            let act = spec.activation;
            // Post activations are identity or leaky ReLU: derivative from pre only.
            ndarray::Zip::from(&mut dout).and(&cache.pre).for_each(|g, &z| *g *= act.derivative(z, 0.0));
            let h = spec.hidden;
            let x = if l == 0 { batch.data.view() } else { caches[l - 1].out.view() };
            let mut dx = Array2::<f64>::zeros(x.dim());
            for (dir, lay) in layouts[l].iter().enumerate() {
                let dh = dout.slice(s![.., dir * h..(dir + 1) * h]);
                self.direction_backward(x, dh, &cache.dirs[dir], lay, batch, dir == 0, &mut grad, &mut dx);
            }
            dout = dx;
        }
        Ok((loss, grad))
    }

    #[allow(clippy::too_many_arguments)]
    fn direction_backward(
        &self,
        x: ArrayView2<f64>,
        dh_out: ArrayView2<f64>,
        cache: &DirCache,
        lay: &DirLayout,
        batch: &SeqBatch,
        forward: bool,
        grad: &mut [f64],
        dx: &mut Array2<f64>,
    ) {
        let (wx, wh, _) = self.dir_views(lay);
        let (steps, nb, h) = (batch.steps, batch.batch, lay.hidden);
        let mut dgates = Array2::<f64>::zeros((steps * nb, 4 * h));
        // Hidden state each row saw as its recurrent input (zero at the first step).
        let mut h_prev = Array2::<f64>::zeros((steps * nb, h));
        let mut dh_next = Array2::<f64>::zeros((nb, h));
        let mut dc_next = Array2::<f64>::zeros((nb, h));
        for step in (0..steps).rev() {
            let t = if forward { step } else { steps - 1 - step };
            let prev = (step > 0).then(|| if forward { t - 1 } else { t + 1 });
            for b in 0..nb {
                let r = t * nb + b;
                for k in 0..h {
                    let i = cache.gates[[r, k]];
                    let f = cache.gates[[r, h + k]];
                    let g = cache.gates[[r, 2 * h + k]];
                    let o = cache.gates[[r, 3 * h + k]];
                    let c = cache.cell[[r, k]];
                    let c_prev = prev.map_or(0.0, |p| cache.cell[[p * nb + b, k]]);
                    let tc = c.tanh();
                    let dh = dh_out[[r, k]] + dh_next[[b, k]];
                    let d_o = dh * tc;
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[[b, k]];
                    dgates[[r, k]] = dc * g * i * (1.0 - i);
                    dgates[[r, h + k]] = dc * c_prev * f * (1.0 - f);
                    dgates[[r, 2 * h + k]] = dc * i * (1.0 - g * g);
                    dgates[[r, 3 * h + k]] = d_o * o * (1.0 - o);
                    dc_next[[b, k]] = dc * f;
                }
            }
            match prev {
                Some(p) => {
                    h_prev
                        .slice_mut(s![t * nb..(t + 1) * nb, ..])
                        .assign(&cache.hidden.slice(s![p * nb..(p + 1) * nb, ..]));
                    let dg = dgates.slice(s![t * nb..(t + 1) * nb, ..]);
                    general_mat_mul(1.0, &dg, &wh, 0.0, &mut dh_next);
                }
                None => dh_next.fill(0.0),
            }
        }
        let h4 = 4 * h;
        let gwx = dgates.t().dot(&x);
        copy_logical(&mut grad[lay.wx..lay.wx + h4 * lay.input], &gwx);
        let gwh = dgates.t().dot(&h_prev);
        copy_logical(&mut grad[lay.wh..lay.wh + h4 * h], &gwh);
        for (g, v) in grad[lay.b..lay.b + h4].iter_mut().zip(dgates.sum_axis(Axis(0))) {
            *g = v;
        }
        general_mat_mul(1.0, &dgates, &wx, 1.0, dx);
    }

    /// Parameters of the mirrored network: forward and backward blocks of
    /// every layer swapped, and the halves of every consumer's input columns
    /// swapped to match. Running the mirrored network on a time-reversed
    /// input yields the time-reversed output.
    pub fn mirrored(&self) -> BiLstmNet {
        let mut p = self.params.clone();
        let layouts = self.spec.dir_layouts();
        for (l, dirs) in layouts.iter().enumerate() {
            let [f, b] = dirs;
            let len = 4 * f.hidden * (f.input + f.hidden + 1);
            for k in 0..len {
                p.swap(f.wx + k, b.wx + k);
            }
            if l > 0 {
                // Swap input column halves of both directions of this layer.
                let half = f.input / 2;
                for lay in dirs {
                    for row in 0..4 * lay.hidden {
                        let base = lay.wx + row * lay.input;
                        for c in 0..half {
                            p.swap(base + c, base + half + c);
                        }
                    }
                }
            }
        }
        let d = self.spec.dense_offset();
        let w = self.spec.last_width();
        for row in 0..self.spec.output {
            let base = d + row * w;
            for c in 0..w / 2 {
                p.swap(base + c, base + w / 2 + c);
            }
        }
        BiLstmNet {
            spec: self.spec.clone(),
            params: p,
        }
    }
}
