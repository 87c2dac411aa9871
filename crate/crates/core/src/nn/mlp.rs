//! Fully connected feed-forward networks.
//!
//! Parameters are one flat vector; layer `l` stores its weight matrix
//! (`out × in`, row-major) followed by its `out` biases.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::scg::{train_scg, Objective, ScgConfig, ScgOutcome};
use super::{copy_logical, fill_uniform_fan, row_losses, Activation, Loss};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub sizes: Vec<usize>,
    /// One activation per non-input layer.
    pub activations: Vec<Activation>,
    pub loss: Loss,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, activations: Vec<Activation>, loss: Loss) -> Result<Self> {
        let spec = MlpSpec {
            sizes,
            activations,
            loss,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(Error::invalid("an MLP needs at least one hidden layer"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.activations.len() != self.sizes.len() - 1 {
            return Err(Error::invalid("one activation per non-input layer"));
        }
        let (out, hidden) = self.activations.split_last().expect("len >= 2");
        if *out != self.loss.output_activation() {
            return Err(Error::invalid(format!(
                "output activation {out} does not pair with {}",
                self.loss.name()
            )));
        }
        if matches!(self.loss, Loss::BinaryCrossEntropy) && self.output_width() != 1 {
            return Err(Error::invalid("binary cross-entropy expects a single output unit"));
        }
        if hidden.iter().any(|a| matches!(a, Activation::Softmax)) {
            return Err(Error::invalid("softmax is only valid on the output layer"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    /// Σ (in + 1) · out over layers.
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// (weight offset, bias offset, in, out) per layer.
    pub fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let r = (off, off + i * o, i, o);
                off += (i + 1) * o;
                r
            })
            .collect()
    }
}

/// A network spec paired with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

/// Pre-activations and outputs of every layer for one batch.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub pre: Vec<Array2<f64>>,
    pub post: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::Shape {
                what: "MLP parameter vector",
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        let n = spec.param_count();
        Self::new(spec, vec![0.0; n])
    }

    /// Fan-scaled uniform weights, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut SplitMix64) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        for (w, _, i, o) in m.spec.layer_offsets() {
            fill_uniform_fan(&mut m.params[w..w + i * o], i, o, rng);
        }
        Ok(m)
    }

    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(forward_trace(&self.spec, &self.params, inputs)?
            .post
            .pop()
            .expect("at least one layer"))
    }

    /// Mean loss over the batch and its gradient.
    pub fn gradient(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        mlp_gradient(&self.spec, &self.params, inputs, targets)
    }
}

fn layer_views<'a>(params: &'a [f64], w: usize, b: usize, i: usize, o: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
    (
        ArrayView2::from_shape((o, i), &params[w..w + i * o]).expect("layout"),
        ArrayView1::from(&params[b..b + o]),
    )
}

pub fn forward_trace(spec: &MlpSpec, params: &[f64], inputs: ArrayView2<f64>) -> Result<MlpTrace> {
    if inputs.ncols() != spec.input_width() {
        return Err(Error::Shape {
            what: "MLP input width",
            expected: spec.input_width(),
            got: inputs.ncols(),
        });
    }
    let mut pre = Vec::with_capacity(spec.activations.len());
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(spec.activations.len());
    for (l, ((w, b, i, o), act)) in spec.layer_offsets().into_iter().zip(&spec.activations).enumerate() {
        let (wm, bv) = layer_views(params, w, b, i, o);
        let x = if l == 0 { inputs } else { post[l - 1].view() };
        let z = x.dot(&wm.t()) + bv;
        let mut a = z.clone();
        act.apply(&mut a);
        pre.push(z);
        post.push(a);
    }
    Ok(MlpTrace { pre, post })
}

pub fn mlp_gradient(
    spec: &MlpSpec,
    params: &[f64],
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Vec<f64>)> {
    let n = inputs.nrows();
    if targets.dim() != (n, spec.output_width()) {
        return Err(Error::Shape {
            what: "MLP target columns",
            expected: spec.output_width(),
            got: targets.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let trace = forward_trace(spec, params, inputs)?;
    let last = trace.pre.len() - 1;
    let losses = row_losses(spec.loss, trace.pre[last].view(), targets);
    if let Some(bad) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("loss of batch sample {bad}")));
    }
    let loss = losses.iter().sum::<f64>() / n as f64;

    let mut grad = vec![0.0; params.len()];
    let offsets = spec.layer_offsets();
    // Sigmoid + BCE and softmax + CE both give (output - target) at the logits.
    let mut delta = (&trace.post[last] - &targets) / n as f64;
    for l in (0..=last).rev() {
        let (w, b, i, o) = offsets[l];
        let x = if l == 0 { inputs } else { trace.post[l - 1].view() };
        let gw = delta.t().dot(&x);
        copy_logical(&mut grad[w..w + i * o], &gw);
        for (g, s) in grad[b..b + o].iter_mut().zip(delta.sum_axis(Axis(0))) {
            *g = s;
        }
        if l > 0 {
            let (wm, _) = layer_views(params, w, b, i, o);
            let mut back = delta.dot(&wm);
            let act = spec.activations[l - 1];
            ndarray::Zip::from(&mut back)
                .and(&trace.pre[l - 1])
                .and(&trace.post[l - 1])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            delta = back;
        }
    }
    Ok((loss, grad))
}

/// Full-batch loss over a fixed design matrix, for SCG.
pub struct MlpObjective<'a> {
    pub spec: &'a MlpSpec,
    pub inputs: ArrayView2<'a, f64>,
    pub targets: ArrayView2<'a, f64>,
}

impl Objective for MlpObjective<'_> {
    fn loss(&self, params: &[f64]) -> Result<f64> {
        let trace = forward_trace(self.spec, params, self.inputs)?;
        let last = trace.pre.len() - 1;
        let losses = row_losses(self.spec.loss, trace.pre[last].view(), self.targets);
        // A non-finite trial loss is a rejected step, not an error.
        Ok(losses.iter().sum::<f64>() / self.inputs.nrows().max(1) as f64)
    }

    fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        mlp_gradient(self.spec, params, self.inputs, self.targets)
    }
}

/// Trains `mlp` in place with SCG and returns the optimizer outcome.
pub fn fit_mlp_scg(mlp: &mut Mlp, inputs: ArrayView2<f64>, targets: ArrayView2<f64>, config: &ScgConfig) -> Result<ScgOutcome> {
    let objective = MlpObjective { spec: &mlp.spec, inputs, targets };
    let out = train_scg(&objective, mlp.params.clone(), config)?;
    mlp.params.clone_from(&out.params);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_weights_give_uniform_outputs() {
        let spec = MlpSpec::new(vec![4, 3, 20], vec![Activation::Tanh, Activation::Softmax], Loss::CategoricalCrossEntropy).unwrap();
        let m = Mlp::zeros(spec).unwrap();
        let y = m.forward(array![[1.0, -2.0, 3.0, 0.5]].view()).unwrap();
        assert!(y.iter().all(|v| (v - 0.05).abs() < 1e-15));

        let spec = MlpSpec::new(vec![2, 4, 1], vec![Activation::Relu, Activation::Sigmoid], Loss::BinaryCrossEntropy).unwrap();
        let m = Mlp::zeros(spec).unwrap();
        assert_eq!(m.forward(array![[7.0, 1.0]].view()).unwrap()[[0, 0]], 0.5);
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3, 2], vec![Activation::Sigmoid], Loss::BinaryCrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 2, 1], vec![Activation::Tanh, Activation::Softmax], Loss::BinaryCrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 2, 4], vec![Activation::Softmax, Activation::Softmax], Loss::CategoricalCrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 2, 4], vec![Activation::Tanh, Activation::Sigmoid], Loss::BinaryCrossEntropy).is_err());
    }

    #[test]
    fn segmenter_and_classifier_sizes() {
        let seg = MlpSpec::new(vec![183, 100, 100, 1], vec![Activation::Relu, Activation::Tanh, Activation::Sigmoid], Loss::BinaryCrossEntropy).unwrap();
        assert_eq!(seg.param_count(), 184 * 100 + 101 * 100 + 101);
        assert_eq!(seg.param_count(), 28_601);
        let cls = MlpSpec::new(vec![549, 300, 100, 20], vec![Activation::Tanh, Activation::Tanh, Activation::Softmax], Loss::CategoricalCrossEntropy).unwrap();
        assert_eq!(cls.param_count(), 197_120);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let spec = MlpSpec::new(vec![3, 2, 1], vec![Activation::Tanh, Activation::Sigmoid], Loss::BinaryCrossEntropy).unwrap();
        let m = Mlp::zeros(spec).unwrap();
        assert!(matches!(m.forward(array![[1.0, 2.0]].view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn perfect_prediction_has_zero_output_error() {
        // Zero weights give 0.5; targets of 0.5 make the output error vanish.
        let spec = MlpSpec::new(vec![2, 3, 1], vec![Activation::Tanh, Activation::Sigmoid], Loss::BinaryCrossEntropy).unwrap();
        let m = Mlp::zeros(spec).unwrap();
        let (_, g) = m.gradient(array![[1.0, 2.0]].view(), array![[0.5]].view()).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let spec = MlpSpec::new(vec![3, 5, 4], vec![Activation::Tanh, Activation::Softmax], Loss::CategoricalCrossEntropy).unwrap();
        let m = Mlp::init(spec, &mut SplitMix64::new(2)).unwrap();
        let x = array![[0.1, -0.3, 0.8], [1.0, 0.2, -0.5]];
        let t = array![[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let t2 = ndarray::concatenate(Axis(0), &[t.view(), t.view()]).unwrap();
        let (l1, g1) = m.gradient(x.view(), t.view()).unwrap();
        let (l2, g2) = m.gradient(x2.view(), t2.view()).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    fn finite_difference_check(spec: MlpSpec, seed: u64, x: Array2<f64>, t: Array2<f64>) {
        let m = Mlp::init(spec, &mut SplitMix64::new(seed)).unwrap();
        let obj = MlpObjective { spec: &m.spec, inputs: x.view(), targets: t.view() };
        let (_, g) = obj.loss_grad(&m.params).unwrap();
        let h = 1e-5;
        for k in 0..m.params.len() {
            let mut p = m.params.clone();
            p[k] += h;
            let up = obj.loss(&p).unwrap();
            p[k] -= 2.0 * h;
            let down = obj.loss(&p).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            assert!(rel < 1e-5, "param {k}: analytic {} numeric {fd}", g[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(11);
        let x = Array2::from_shape_fn((5, 4), |_| rng.normal());
        let t = Array2::from_shape_fn((5, 1), |(i, _)| (i % 2) as f64);
        let spec = MlpSpec::new(
            vec![4, 6, 5, 1],
            vec![Activation::LeakyRelu(0.01), Activation::Tanh, Activation::Sigmoid],
            Loss::BinaryCrossEntropy,
        )
        .unwrap();
        finite_difference_check(spec, 3, x.clone(), t);

        let t = Array2::from_shape_fn((5, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });
        let spec = MlpSpec::new(vec![4, 5, 3], vec![Activation::Sigmoid, Activation::Softmax], Loss::CategoricalCrossEntropy).unwrap();
        finite_difference_check(spec, 4, x, t);
    }

    #[test]
    fn xor_is_learned_by_scg() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let t = array![[0.0], [1.0], [1.0], [0.0]];
        let spec = MlpSpec::new(vec![2, 4, 1], vec![Activation::Tanh, Activation::Sigmoid], Loss::BinaryCrossEntropy).unwrap();
        let mut m = Mlp::init(spec, &mut SplitMix64::new(7)).unwrap();
        let cfg = ScgConfig { max_iterations: 500, grad_tol: 0.0, ..Default::default() };
        let out = fit_mlp_scg(&mut m, x.view(), t.view(), &cfg).unwrap();
        assert!(*out.trace.last().unwrap() < 0.01, "{:?}", out.trace.last());
        let y = m.forward(x.view()).unwrap();
        for (p, t) in y.iter().zip(&t) {
            assert!((p - t).abs() < 0.1);
        }
    }
}
