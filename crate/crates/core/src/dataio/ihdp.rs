//! Bootstrapped surrogate generator for small real datasets.
//!
//! Two regressions are fit to the source records, `(s, x) -> a` and
//! `(a, s, x) -> y`. New records resample `(s, x)` from the source and draw
//! `a` and `y` from the fitted means plus Gaussian noise whose scale is the
//! surrogate's holdout residual RMS.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{read_dataset, split_rows, write_dataset, Dataset, GeneratorSpec};
use crate::nnet::{fit_regression, net_init, AffineNet, OutputTransform, Regressor, TrainConfig};
use crate::stats::r_squared;
use crate::{Error, Result};

const STANDIN_CSV: &str = include_str!("../../data/ihdp_standin.csv");

/// Rows and seed the bundled stand-in was generated with.
pub const STANDIN_ROWS: usize = 200;
pub const STANDIN_SEED: u64 = 2011;

#[derive(Clone, Debug, PartialEq)]
pub struct IhdpSurrogates {
    /// `(s, x) -> a`.
    pub action_net: AffineNet,
    /// `(a, s, x) -> y`.
    pub outcome_net: AffineNet,
    pub action_sd: f64,
    pub outcome_sd: f64,
    /// Holdout R² of each surrogate.
    pub action_r2: f64,
    pub outcome_r2: f64,
}

fn rms(pred: &Array1<f64>, target: &[f64]) -> f64 {
    let ss: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    (ss / target.len() as f64).sqrt()
}

fn fit_one(
    inputs: &Array2<f64>,
    targets: &[f64],
    train: &[usize],
    test: &[usize],
    cfg: &TrainConfig,
) -> Result<(AffineNet, f64, f64)> {
    let net = net_init(cfg.seed, &[inputs.ncols(), cfg.hidden, 1], OutputTransform::Identity)?;
    let xt = inputs.select(Axis(0), train);
    let yt: Array1<f64> = train.iter().map(|&i| targets[i]).collect();
    let (net, _) = fit_regression(net, xt.view(), yt.view(), cfg)?;
    let held: Vec<f64> = test.iter().map(|&i| targets[i]).collect();
    let pred = net.predict(inputs.select(Axis(0), test).view())?;
    Ok((net.clone(), r_squared(pred.as_slice().unwrap(), &held), rms(&pred, &held)))
}

/// Fits both surrogates on 80% of `source` and scores them on the rest.
pub fn fit_ihdp_surrogates(source: &Dataset, cfg: &TrainConfig) -> Result<IhdpSurrogates> {
    if source.len() < 10 {
        return Err(Error::Generation(format!(
            "surrogate fit needs at least 10 source rows, got {}",
            source.len()
        )));
    }
    let (train, test) = split_rows(source.len(), 0.2, cfg.seed);
    let (action_net, action_r2, action_sd) =
        fit_one(&source.policy_inputs(false), source.a(), &train, &test, cfg)?;
    let outcome_in = source.outcome_inputs(source.a())?;
    let (outcome_net, outcome_r2, outcome_sd) =
        fit_one(&outcome_in, source.y(), &train, &test, cfg)?;
    Ok(IhdpSurrogates {
        action_net,
        outcome_net,
        action_sd,
        outcome_sd,
        action_r2,
        outcome_r2,
    })
}

impl IhdpSurrogates {
    /// `n` new records: resampled `(s, x)`, surrogate `a` and `y` with noise.
    pub fn generate(&self, source: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Generation("n must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..source.len())).collect();
        let base = source.select(&rows).map_err(|e| Error::Generation(e.to_string()))?;
        let a_noise = Normal::new(0.0, self.action_sd).map_err(|e| Error::Generation(e.to_string()))?;
        let y_noise = Normal::new(0.0, self.outcome_sd).map_err(|e| Error::Generation(e.to_string()))?;
        let a_mean = self.action_net.predict(base.policy_inputs(false).view())?;
        let a: Vec<f64> = a_mean.iter().map(|m| m + a_noise.sample(&mut rng)).collect();
        let y_mean = self.outcome_net.predict(base.outcome_inputs(&a)?.view())?;
        let y: Vec<f64> = y_mean.iter().map(|m| m + y_noise.sample(&mut rng)).collect();
        base.with_actions_outcomes(a, y)
    }
}

/// Desk-scale surrogate settings.
pub fn default_surrogate_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 400,
        lr: 0.01,
        hidden: 32,
        batch_size: None,
        seed,
    }
}

/// Fits surrogates to `source` and draws `spec.n` records with `spec.seed`.
pub fn generate_ihdp_surrogate(spec: &GeneratorSpec, source: &Dataset) -> Result<Dataset> {
    let sur = fit_ihdp_surrogates(source, &default_surrogate_config(spec.seed))?;
    sur.generate(source, spec.n, spec.seed)
}

/// A synthetic stand-in for the real program data: 2 binary and 2
/// continuous covariates, a continuous participation-like action that
/// depends on `s` and `x`, and a nonlinear outcome with an `s`-by-`a`
/// interaction.
pub fn standin_source(seed: u64, n: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut s = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, 4));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let si = u8::from(rng.random::<f64>() < 0.4);
        let sf = f64::from(si);
        let b0 = f64::from(u8::from(rng.random::<f64>() < 0.3 + 0.3 * sf));
        let b1 = f64::from(u8::from(rng.random::<f64>() < 0.5));
        let c0: f64 = std.sample(&mut rng);
        let c1: f64 = 0.5 * c0 + std.sample(&mut rng);
        let ai = (0.3 + 0.2 * sf + 0.1 * b0 - 0.05 * c1 + 0.1 * std.sample(&mut rng)).clamp(0.0, 1.0);
        let yi = 85.0 + 4.0 * sf + 3.0 * b0 - 2.0 * b1 + 2.5 * c0.tanh()
            + 10.0 * ai
            + 6.0 * sf * ai
            + 4.0 * std.sample(&mut rng);
        for (j, v) in [b0, b1, c0, c1].into_iter().enumerate() {
            x[[i, j]] = v;
        }
        s.push(si);
        a.push(ai);
        y.push(yi);
    }
    Dataset::from_columns(s, x, a, y).map_err(|e| Error::Generation(e.to_string()))
}

/// The bundled 200-row stand-in.
pub fn bundled_standin() -> Result<Dataset> {
    read_dataset(STANDIN_CSV.as_bytes(), Path::new("data/ihdp_standin.csv"))
}

/// Writes `standin_source(STANDIN_SEED, STANDIN_ROWS)` in CSV form.
pub fn write_standin<W: std::io::Write>(mut w: W) -> Result<()> {
    let ds = standin_source(STANDIN_SEED, STANDIN_ROWS)?;
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf)?;
    w.write_all(&buf)?;
    Ok(())
}
