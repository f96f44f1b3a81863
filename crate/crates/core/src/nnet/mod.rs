//! Small feedforward networks with analytic gradients.
//!
//! Everything here works on row-major batches: an input matrix has one row
//! per sample. Networks are affine layers joined by rectifiers; the only
//! composite model is [`StructuredOutcomeNet`], the additive `f + g + h`
//! outcome model used by the moderation-breaking method.

mod adam;
mod affine;
mod format;
mod structured;
mod train;

pub use adam::{adam_step, AdamState};
pub use affine::{net_init, policy_forward_clipped, AffineNet, ForwardCache, Layer, OutputTransform};
pub use format::{read_affine, read_structured, write_affine, write_structured};
pub use structured::{Anchor, StructuredOutcomeNet, StructuredValue};
pub use train::{fit_regression, TrainConfig};

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::Result;

/// Parameter-shaped gradient buffers, one flat slice per parameter tensor
/// in the same order as [`Regressor::params_mut`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.0.iter().map(Vec::as_slice).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.0.iter_mut().zip(&other.0) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// A model that can be fit to scalar targets by mean-squared error.
pub trait Regressor {
    fn input_dim(&self) -> usize;

    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>>;

    /// Mean-squared-error loss over the batch and its exact gradient with
    /// respect to every parameter.
    fn mse_gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(Gradients, f64)>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Maps the model output `o` to `scale * o + shift` by editing the final
    /// layer(s) in place.
    fn rescale_output(&mut self, scale: f64, shift: f64);
}

/// An outcome model `mu_Y(a, s, x)` whose input rows are `[a, s, x...]`.
pub trait OutcomeModel: Regressor {
    /// Predicted mean outcome and its derivative with respect to the action
    /// column, per row.
    fn predict_with_action_slope(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)>;
}
