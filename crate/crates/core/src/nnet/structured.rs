use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::affine::mse_and_residual;
use super::{AffineNet, Gradients, OutcomeModel, Regressor};
use crate::error::contract;
use crate::Result;

/// Optional identifiability regularizer: `weight * (mean_i g(action, s_i, x_i))^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub action: f64,
    pub weight: f64,
}

/// Additive outcome model `mu_Y(a,s,x) = f(s,x) + g(a,s,x) + h(a,x)`.
///
/// Input rows are `[a, s, x...]`; each subnet sees only its own columns, so
/// `f` cannot depend on `a` and `h` cannot depend on `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredOutcomeNet {
    pub f_net: AffineNet,
    pub g_net: AffineNet,
    pub h_net: AffineNet,
    pub anchor: Option<Anchor>,
}

/// Components of one structured evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuredValue {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub sum: f64,
}

/// Column views for the three subnets.
pub(crate) struct SplitInputs {
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub h: Array2<f64>,
}

impl StructuredOutcomeNet {
    pub fn new(f_net: AffineNet, g_net: AffineNet, h_net: AffineNet) -> Result<Self> {
        let d = f_net.input_dim().checked_sub(1).ok_or_else(|| contract("f_net needs s input"))?;
        if g_net.input_dim() != d + 2 || h_net.input_dim() != d + 1 {
            return Err(contract(format!(
                "subnet input widths {}/{}/{} do not fit covariate dimension {d}",
                f_net.input_dim(),
                g_net.input_dim(),
                h_net.input_dim()
            )));
        }
        for net in [&f_net, &g_net, &h_net] {
            if net.output_dim() != 1 {
                return Err(contract("structured subnets must have scalar output"));
            }
        }
        Ok(Self {
            f_net,
            g_net,
            h_net,
            anchor: None,
        })
    }

    /// Covariate dimension `d`.
    pub fn covariate_dim(&self) -> usize {
        self.h_net.input_dim() - 1
    }

    pub(crate) fn split(&self, inputs: ArrayView2<f64>) -> Result<SplitInputs> {
        let d = self.covariate_dim();
        if inputs.ncols() != d + 2 {
            return Err(contract(format!(
                "structured net expects {} inputs [a, s, x], got {}",
                d + 2,
                inputs.ncols()
            )));
        }
        let f = inputs.slice(s![.., 1..]).to_owned();
        let g = inputs.to_owned();
        let mut h = Array2::zeros((inputs.nrows(), d + 1));
        h.column_mut(0).assign(&inputs.column(0));
        h.slice_mut(s![.., 1..]).assign(&inputs.slice(s![.., 2..]));
        Ok(SplitInputs { f, g, h })
    }

    /// Batched `(f, g, h)` columns.
    pub fn components(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>, Array1<f64>)> {
        let split = self.split(inputs)?;
        Ok((
            self.f_net.forward_batch(split.f.view())?.column(0).to_owned(),
            self.g_net.forward_batch(split.g.view())?.column(0).to_owned(),
            self.h_net.forward_batch(split.h.view())?.column(0).to_owned(),
        ))
    }

    /// Values of `g` and `dg/da` per row.
    pub fn g_with_action_slope(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        self.g_net.predict_with_action_slope(inputs)
    }

    /// Single-point decomposition with `sum = f + g + h`.
    pub fn structured_forward(&self, a: f64, s: f64, x: &[f64]) -> Result<StructuredValue> {
        if x.len() != self.covariate_dim() {
            return Err(contract(format!(
                "expected {} covariates, got {}",
                self.covariate_dim(),
                x.len()
            )));
        }
        let mut f_in = vec![s];
        f_in.extend_from_slice(x);
        let mut g_in = vec![a, s];
        g_in.extend_from_slice(x);
        let mut h_in = vec![a];
        h_in.extend_from_slice(x);
        let f = self.f_net.forward(&f_in)?[0];
        let g = self.g_net.forward(&g_in)?[0];
        let h = self.h_net.forward(&h_in)?[0];
        Ok(StructuredValue {
            f,
            g,
            h,
            sum: f + g + h,
        })
    }

    fn anchor_inputs(&self, inputs: ArrayView2<f64>, action: f64) -> Array2<f64> {
        let mut anchored = inputs.to_owned();
        anchored.column_mut(0).fill(action);
        anchored
    }
}

impl Regressor for StructuredOutcomeNet {
    fn input_dim(&self) -> usize {
        self.covariate_dim() + 2
    }

    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        let (f, g, h) = self.components(inputs)?;
        Ok(f + g + h)
    }

    fn mse_gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(Gradients, f64)> {
        let split = self.split(inputs)?;
        let fc = self.f_net.forward_cached(split.f.view())?;
        let gc = self.g_net.forward_cached(split.g.view())?;
        let hc = self.h_net.forward_cached(split.h.view())?;
        let pred = &fc.output.column(0) + &gc.output.column(0) + hc.output.column(0);
        let (mut loss, d) = mse_and_residual(pred.view(), targets)?;
        let d_out = d.insert_axis(Axis(1));
        let (gf, _) = self.f_net.backward(&fc, d_out.view());
        let (gg, _) = self.g_net.backward(&gc, d_out.view());
        let (gh, _) = self.h_net.backward(&hc, d_out.view());
        let mut g_grads = AffineNet::flatten_grads(gg);
        if let Some(anchor) = self.anchor.filter(|a| a.weight > 0.0) {
            let anchored = self.anchor_inputs(inputs, anchor.action);
            let ac = self.g_net.forward_cached(anchored.view())?;
            let n = inputs.nrows() as f64;
            let mean_g = ac.output.column(0).sum() / n;
            loss += anchor.weight * mean_g * mean_g;
            let upstream = Array2::from_elem((inputs.nrows(), 1), 2.0 * anchor.weight * mean_g / n);
            let (ga, _) = self.g_net.backward(&ac, upstream.view());
            g_grads.add_scaled(&AffineNet::flatten_grads(ga), 1.0);
        }
        let mut all = AffineNet::flatten_grads(gf).0;
        all.extend(g_grads.0);
        all.extend(AffineNet::flatten_grads(gh).0);
        Ok((Gradients(all), loss))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.f_net.params_mut();
        out.extend(self.g_net.params_mut());
        out.extend(self.h_net.params_mut());
        out
    }

    fn rescale_output(&mut self, scale: f64, shift: f64) {
        self.f_net.rescale_output(scale, shift);
        self.g_net.rescale_output(scale, 0.0);
        self.h_net.rescale_output(scale, 0.0);
    }
}

impl OutcomeModel for StructuredOutcomeNet {
    fn predict_with_action_slope(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let split = self.split(inputs)?;
        let f = self.f_net.forward_batch(split.f.view())?;
        let (g, dg) = self.g_net.predict_with_action_slope(split.g.view())?;
        let (h, dh) = self.h_net.predict_with_action_slope(split.h.view())?;
        Ok((&f.column(0) + &g + &h, dg + dh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{net_init, Layer, OutputTransform};
    use ndarray::array;

    fn net(seed: u64, d: usize) -> StructuredOutcomeNet {
        StructuredOutcomeNet::new(
            net_init(seed, &[d + 1, 6, 1], OutputTransform::Identity).unwrap(),
            net_init(seed + 1, &[d + 2, 6, 1], OutputTransform::Identity).unwrap(),
            net_init(seed + 2, &[d + 1, 6, 1], OutputTransform::Identity).unwrap(),
        )
        .unwrap()
    }

    fn zero_net(inputs: usize) -> AffineNet {
        AffineNet::from_layers(
            vec![Layer {
                weights: Array2::zeros((1, inputs)),
                bias: array![0.0],
            }],
            OutputTransform::Identity,
        )
        .unwrap()
    }

    #[test]
    fn sum_is_exact_component_sum() {
        let n = net(3, 2);
        let v = n.structured_forward(0.4, 1.0, &[0.3, -1.2]).unwrap();
        assert_eq!(v.sum, v.f + v.g + v.h);
        let batch = array![[0.4, 1.0, 0.3, -1.2]];
        assert_eq!(n.predict(batch.view()).unwrap()[0], v.sum);
    }

    #[test]
    fn zero_g_and_h_leave_f() {
        let mut n = net(5, 2);
        n.g_net = zero_net(4);
        n.h_net = zero_net(3);
        let v = n.structured_forward(0.7, 0.0, &[1.0, 2.0]).unwrap();
        assert_eq!(v.sum, v.f);
    }

    #[test]
    fn input_restrictions_hold() {
        let n = net(11, 3);
        let x = [0.2, 1.0, -0.5];
        let base = n.structured_forward(0.1, 1.0, &x).unwrap();
        let moved_a = n.structured_forward(0.9, 1.0, &x).unwrap();
        let moved_s = n.structured_forward(0.1, 0.0, &x).unwrap();
        assert_eq!(base.f, moved_a.f);
        assert_ne!(base.g, moved_a.g);
        assert_eq!(base.h, moved_s.h);
    }

    #[test]
    fn arity_mismatch() {
        let n = net(1, 2);
        assert!(n.structured_forward(0.0, 0.0, &[1.0]).is_err());
        assert!(n.predict(array![[0.0, 1.0]].view()).is_err());
    }
}
