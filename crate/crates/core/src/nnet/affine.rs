use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradients, OutcomeModel, Regressor};
use crate::error::contract;
use crate::Result;

/// Transform applied to the last layer's output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputTransform {
    Identity,
    /// `lo + (hi - lo) * sigmoid(z)`, strictly inside `(lo, hi)`.
    ShiftedSigmoid { lo: f64, hi: f64 },
}

/// One affine map `z = W x + b`. `weights` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Stack of affine layers with a rectifier after every hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineNet {
    layers: Vec<Layer>,
    output: OutputTransform,
}

/// Intermediate values of a batched forward pass, kept for backprop.
#[derive(Debug)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of the last layer.
    last_pre: Array2<f64>,
    /// Final (transformed) output.
    pub output: Array2<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Builds a net with uniform fan-in initialization, `U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in))` for weights and biases, from a seeded ChaCha stream.
pub fn net_init(seed: u64, widths: &[usize], output: OutputTransform) -> Result<AffineNet> {
    if widths.len() < 2 {
        return Err(contract("a net needs at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(contract(format!("zero-width layer in {widths:?}")));
    }
    if let OutputTransform::ShiftedSigmoid { lo, hi } = output {
        if !(lo < hi) {
            return Err(contract(format!("sigmoid bounds need lo < hi, got [{lo}, {hi}]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = widths
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
            let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
            Layer { weights, bias }
        })
        .collect();
    Ok(AffineNet { layers, output })
}

impl AffineNet {
    /// Assembles a net from explicit layers, checking dimension chaining.
    pub fn from_layers(layers: Vec<Layer>, output: OutputTransform) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("a net needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.nrows() {
                return Err(contract(format!("layer {i}: bias length mismatch")));
            }
            if layer.weights.is_empty() {
                return Err(contract(format!("layer {i}: zero width")));
            }
            if i > 0 && layers[i - 1].weights.nrows() != layer.weights.ncols() {
                return Err(contract(format!("layer {i}: input width mismatch")));
            }
        }
        Ok(Self { layers, output })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.output
    }

    pub fn set_output_transform(&mut self, output: OutputTransform) {
        self.output = output;
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weights.ncols()];
        w.extend(self.layers.iter().map(|l| l.weights.nrows()));
        w
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        let want = self.layers[0].weights.ncols();
        if inputs.ncols() != want {
            return Err(contract(format!(
                "net expects {want} inputs, got {}",
                inputs.ncols()
            )));
        }
        Ok(())
    }

    /// Batched forward pass keeping everything needed for backprop.
    pub fn forward_cached(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&inputs)?;
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(inputs.to_owned());
        let last = self.layers.len() - 1;
        let mut last_pre = Array2::zeros((0, 0));
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights.t());
            z += &layer.bias;
            if i == last {
                last_pre = z;
            } else {
                z.mapv_inplace(|v| v.max(0.0));
                acts.push(z);
            }
        }
        let output = match self.output {
            OutputTransform::Identity => last_pre.clone(),
            OutputTransform::ShiftedSigmoid { lo, hi } => {
                last_pre.mapv(|z| lo + (hi - lo) * sigmoid(z))
            }
        };
        Ok(ForwardCache {
            inputs: acts,
            last_pre,
            output,
        })
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(inputs)?.output)
    }

    /// Last-layer pre-activations, ignoring the output transform.
    pub fn forward_pre(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(inputs)?.last_pre)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| contract(e.to_string()))?;
        Ok(self.forward_batch(view)?.row(0).to_vec())
    }

    /// Gradient of the pre-activation w.r.t. the output transform.
    fn upstream_pre(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Array2<f64> {
        match self.output {
            OutputTransform::Identity => d_out.to_owned(),
            OutputTransform::ShiftedSigmoid { lo, hi } => {
                let mut d = d_out.to_owned();
                Zip::from(&mut d).and(&cache.last_pre).for_each(|d, &z| {
                    let s = sigmoid(z);
                    *d *= (hi - lo) * s * (1.0 - s);
                });
                d
            }
        }
    }

    /// Backprop of `d_out` (same shape as the output) to parameter gradients
    /// and to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: ArrayView2<f64>,
    ) -> (Vec<Layer>, Array2<f64>) {
        let mut delta = self.upstream_pre(cache, d_out);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gw = delta.t().dot(&cache.inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Layer {
                weights: gw,
                bias: gb,
            });
            let mut d_in = delta.dot(&layer.weights);
            if i > 0 {
                Zip::from(&mut d_in)
                    .and(&cache.inputs[i])
                    .for_each(|d, &act| {
                        if act <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = d_in;
        }
        grads.reverse();
        (grads, delta)
    }

    /// Backprop of `d_out` to the inputs only; skips weight gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Array2<f64> {
        let mut delta = self.upstream_pre(cache, d_out);
        for i in (0..self.layers.len()).rev() {
            let mut d_in = delta.dot(&self.layers[i].weights);
            if i > 0 {
                Zip::from(&mut d_in)
                    .and(&cache.inputs[i])
                    .for_each(|d, &act| {
                        if act <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = d_in;
        }
        delta
    }

    /// Flattens per-layer gradients in `params_mut` order.
    pub fn flatten_grads(grads: Vec<Layer>) -> Gradients {
        let mut out = Vec::with_capacity(grads.len() * 2);
        for g in grads {
            // Logical (row-major) order; `t().dot()` may hand back a
            // column-major array.
            out.push(g.weights.iter().copied().collect());
            out.push(g.bias.to_vec());
        }
        Gradients(out)
    }

    fn scalar_output(&self) -> Result<()> {
        if self.output_dim() != 1 {
            return Err(contract("regression needs a scalar-output net"));
        }
        Ok(())
    }
}

/// Action of a policy net at `(s, x)` squashed into `(lo, hi)`:
/// `lo + (hi - lo) * sigmoid(pre)` where `pre` is the raw scalar output.
pub fn policy_forward_clipped(net: &AffineNet, s: f64, x: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(contract(format!("clip interval [{lo}, {hi}] is empty")));
    }
    let mut input = Vec::with_capacity(x.len() + 1);
    input.push(s);
    input.extend_from_slice(x);
    let view = ArrayView2::from_shape((1, input.len()), &input).map_err(|e| contract(e.to_string()))?;
    let pre = net.forward_pre(view)?;
    if pre.ncols() != 1 {
        return Err(contract("policy net must have scalar output"));
    }
    Ok(lo + (hi - lo) * sigmoid(pre[[0, 0]]))
}

pub(crate) fn mse_and_residual(
    pred: ArrayView1<f64>,
    targets: ArrayView1<f64>,
) -> Result<(f64, Array1<f64>)> {
    let n = targets.len();
    if n == 0 {
        return Err(contract("empty batch"));
    }
    if pred.len() != n {
        return Err(contract(format!(
            "{} predictions for {n} targets",
            pred.len()
        )));
    }
    let resid = &pred - &targets;
    let loss = resid.dot(&resid) / n as f64;
    Ok((loss, resid * (2.0 / n as f64)))
}

impl Regressor for AffineNet {
    fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.scalar_output()?;
        Ok(self.forward_batch(inputs)?.column(0).to_owned())
    }

    fn mse_gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(Gradients, f64)> {
        self.scalar_output()?;
        if inputs.nrows() == 0 {
            return Err(contract("empty batch"));
        }
        let cache = self.forward_cached(inputs)?;
        let (loss, d) = mse_and_residual(cache.output.column(0), targets)?;
        let d_out = d.insert_axis(Axis(1));
        let (grads, _) = self.backward(&cache, d_out.view());
        Ok((Self::flatten_grads(grads), loss))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(
                layer
                    .weights
                    .as_slice_mut()
                    .expect("weights are standard layout"),
            );
            out.push(layer.bias.as_slice_mut().expect("bias is contiguous"));
        }
        out
    }

    fn rescale_output(&mut self, scale: f64, shift: f64) {
        let last = self.layers.last_mut().expect("nonempty");
        last.weights *= scale;
        last.bias *= scale;
        last.bias += shift;
    }
}

impl OutcomeModel for AffineNet {
    fn predict_with_action_slope(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        self.scalar_output()?;
        let cache = self.forward_cached(inputs)?;
        let ones = Array2::ones((inputs.nrows(), 1));
        let d_in = self.input_gradient(&cache, ones.view());
        Ok((cache.output.column(0).to_owned(), d_in.column(0).to_owned()))
    }
}
