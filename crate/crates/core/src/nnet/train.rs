use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, AdamState, Regressor};
use crate::error::contract;
use crate::{Error, Result};

/// Settings for one regression fit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Hidden layer width used when the caller builds the net from this
    /// config.
    pub hidden: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(contract("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(contract(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.hidden == 0 {
            return Err(contract("hidden width must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(contract("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Fits `net` to `(inputs, targets)` by Adam on mean-squared error.
///
/// Targets are standardized internally and the scale is folded back into
/// the net's final layer before returning. The trace holds the mean
/// training loss of each epoch in the original target units.
pub fn fit_regression<R: Regressor>(
    mut net: R,
    inputs: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    cfg: &TrainConfig,
) -> Result<(R, Vec<f64>)> {
    cfg.validate()?;
    let n = inputs.nrows();
    if n == 0 || targets.len() != n {
        return Err(contract(format!(
            "{} input rows and {} targets",
            n,
            targets.len()
        )));
    }
    if inputs.ncols() != net.input_dim() {
        return Err(contract(format!(
            "net expects {} inputs, got {}",
            net.input_dim(),
            inputs.ncols()
        )));
    }
    if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(contract("training data contains non-finite values"));
    }
    let mean = targets.mean().unwrap_or(0.0);
    let var = targets.mapv(|t| (t - mean).powi(2)).sum() / n as f64;
    let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
    let z: Array1<f64> = targets.mapv(|t| (t - mean) / scale);

    let mut state = AdamState::for_params(cfg.lr, &net.params_mut());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (loss, grads) = if batch == n {
                let (g, l) = net.mse_gradients(inputs, z.view())?;
                (l, g)
            } else {
                let xb: Array2<f64> = inputs.select(Axis(0), chunk);
                let yb: Array1<f64> = z.select(Axis(0), chunk);
                let (g, l) = net.mse_gradients(xb.view(), yb.view())?;
                (l, g)
            };
            if !loss.is_finite() {
                trace.push(loss * scale * scale);
                return Err(Error::Diverged {
                    epoch,
                    loss,
                    trace,
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut net.params_mut(), &grads.slices(), &mut state)?;
        }
        trace.push(epoch_loss / n as f64 * scale * scale);
    }
    net.rescale_output(scale, mean);
    Ok((net, trace))
}
