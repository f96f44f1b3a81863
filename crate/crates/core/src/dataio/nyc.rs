//! School-funding style semi-synthetic generator.
//!
//! Covariates are two binary offerings (`x0`, `x1`, with group-dependent
//! rates) and one nonnegative count-like covariate (`x2`, half-normal). The
//! baseline policy is
//!
//! ```text
//! A_raw = (w_sx . (s*x))^2 + max(0, w_x . x) + N(action_noise_mean, action_noise_sd)
//! ```
//!
//! rescaled so the sample min/max of `A` are exactly 0 and 1. Outcomes are
//!
//! ```text
//! Y = 20 E + beta . [s, x, s*x, a, x*a, s*a, s*a*x] + gamma . [x, a, a*x]
//!       + N(outcome_noise_mean, outcome_noise_sd)
//! ```
//!
//! where `E` is an exam-rate term in `[0, 1]`.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::contract;
use crate::{Error, Result};

/// Covariate arity of this generator.
pub const NYC_COVARIATES: usize = 3;
const BETA_LEN: usize = 1 + 3 + 3 + 1 + 3 + 1 + 3;
const GAMMA_LEN: usize = 3 + 1 + 3;
/// Index of the first `beta` coefficient that multiplies a term with `a`.
const BETA_FIRST_ACTION_TERM: usize = 7;
const BETA_SA: usize = 11;
const GAMMA_FIRST_ACTION_TERM: usize = 3;

/// How the exam-rate term `E` is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExamRateSource {
    /// `E = sigmoid(e0 + e_s s + e_x . x)` with coefficients drawn per seed,
    /// so `E` is a function of `(s, x)`.
    Structural,
    /// `E ~ Uniform(0, 1)` independent of everything else.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub n: usize,
    /// Drawn from `U[0,1]^3` when absent.
    pub w_sx: Option<Vec<f64>>,
    pub w_x: Option<Vec<f64>>,
    /// Drawn when absent: standard normal, shifted by `action_coef_shift` on
    /// the terms that contain `a`.
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub action_noise_mean: f64,
    pub action_noise_sd: f64,
    pub outcome_noise_mean: f64,
    pub outcome_noise_sd: f64,
    pub exam_rate: ExamRateSource,
    /// `P(s = 1)`.
    pub group_rate: f64,
    pub action_coef_shift: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 20_000,
            w_sx: None,
            w_x: None,
            beta: None,
            gamma: None,
            action_noise_mean: 0.5,
            action_noise_sd: 0.4,
            outcome_noise_mean: 1.0,
            outcome_noise_sd: 1.0,
            exam_rate: ExamRateSource::Structural,
            group_rate: 0.25,
            action_coef_shift: 1.0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(contract("n must be at least 1"));
        }
        if !(self.action_noise_sd > 0.0) {
            return Err(contract("action noise sd must be > 0"));
        }
        if !(self.outcome_noise_sd >= 0.0) {
            return Err(contract("outcome noise sd must be >= 0"));
        }
        if !(self.group_rate > 0.0 && self.group_rate < 1.0) {
            return Err(contract("group rate must be in (0, 1)"));
        }
        let lens = [
            (self.w_sx.as_ref(), NYC_COVARIATES, "w_sx"),
            (self.w_x.as_ref(), NYC_COVARIATES, "w_x"),
            (self.beta.as_ref(), BETA_LEN, "beta"),
            (self.gamma.as_ref(), GAMMA_LEN, "gamma"),
        ];
        for (v, want, name) in lens {
            if let Some(v) = v {
                if v.len() != want {
                    return Err(contract(format!("{name} needs {want} values, got {}", v.len())));
                }
            }
        }
        Ok(())
    }
}

/// Frozen generator state: the spec plus every drawn coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    pub w_sx: Vec<f64>,
    pub w_x: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `P(x_j = 1 | s)` for the binary covariates, indexed `[j][s]`.
    pub binary_rates: [[f64; 2]; 2],
    /// `[e0, e_s, e_x0, e_x1, e_x2]`.
    pub exam_coef: Vec<f64>,
    pub raw_action_min: f64,
    pub raw_action_max: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GroundTruth {
    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != NYC_COVARIATES {
            return Err(contract(format!(
                "expected {NYC_COVARIATES} covariates, got {}",
                x.len()
            )));
        }
        Ok(())
    }

    fn raw_action_mean(&self, s: u8, x: &[f64]) -> f64 {
        let sf = f64::from(s);
        let sx: Vec<f64> = x.iter().map(|v| sf * v).collect();
        dot(&self.w_sx, &sx).powi(2) + dot(&self.w_x, x).max(0.0) + self.spec.action_noise_mean
    }

    fn rescale(&self, raw: f64) -> f64 {
        (raw - self.raw_action_min) / (self.raw_action_max - self.raw_action_min)
    }

    /// Mean of the (rescaled) baseline action at `(s, x)`.
    pub fn baseline_action_mean(&self, s: u8, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.rescale(self.raw_action_mean(s, x)))
    }

    /// Standard deviation of the baseline action on the rescaled axis.
    pub fn baseline_action_sd(&self) -> f64 {
        self.spec.action_noise_sd / (self.raw_action_max - self.raw_action_min)
    }

    /// Expected exam-rate term at `(s, x)`.
    pub fn exam_rate(&self, s: u8, x: &[f64]) -> f64 {
        match self.spec.exam_rate {
            ExamRateSource::Structural => {
                let z = self.exam_coef[0]
                    + self.exam_coef[1] * f64::from(s)
                    + dot(&self.exam_coef[2..], x);
                sigmoid(z)
            }
            ExamRateSource::Uniform => 0.5,
        }
    }

    /// Structural outcome without the exam term or noise.
    fn linear_part(&self, s: u8, x: &[f64], a: f64) -> f64 {
        let sf = f64::from(s);
        let mut terms = Vec::with_capacity(BETA_LEN);
        terms.push(sf);
        terms.extend_from_slice(x);
        terms.extend(x.iter().map(|v| sf * v));
        terms.push(a);
        terms.extend(x.iter().map(|v| v * a));
        terms.push(sf * a);
        terms.extend(x.iter().map(|v| sf * a * v));
        let mut gterms = Vec::with_capacity(GAMMA_LEN);
        gterms.extend_from_slice(x);
        gterms.push(a);
        gterms.extend(x.iter().map(|v| a * v));
        dot(&self.beta, &terms) + dot(&self.gamma, &gterms)
    }

    /// The part of the mean outcome that involves both `s` and `a`:
    /// `beta_sa s a + beta_sax . (s a x)`.
    pub fn moderated_component(&self, s: u8, x: &[f64], a: f64) -> Result<f64> {
        self.check_x(x)?;
        let sa = f64::from(s) * a;
        Ok(self.beta[BETA_SA] * sa + dot(&self.beta[BETA_SA + 1..], x) * sa)
    }
}

/// `E[Y | s, x, a]` under the generator: the structural equation with the
/// expected exam term and the outcome-noise mean.
pub fn counterfactual_mean_outcome(gt: &GroundTruth, s: u8, x: &[f64], a: f64) -> Result<f64> {
    gt.check_x(x)?;
    if s > 1 {
        return Err(contract(format!("group label {s} not in {{0,1}}")));
    }
    Ok(20.0 * gt.exam_rate(s, x) + gt.linear_part(s, x, a) + gt.spec.outcome_noise_mean)
}

fn draw_coefficients(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> GroundTruth {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let w_sx: Vec<f64> = (0..NYC_COVARIATES).map(|_| rng.random::<f64>()).collect();
    let w_x: Vec<f64> = (0..NYC_COVARIATES).map(|_| rng.random::<f64>()).collect();
    let beta: Vec<f64> = (0..BETA_LEN)
        .map(|k| {
            let shift = if k >= BETA_FIRST_ACTION_TERM { spec.action_coef_shift } else { 0.0 };
            std.sample(rng) + shift
        })
        .collect();
    let gamma: Vec<f64> = (0..GAMMA_LEN)
        .map(|k| {
            let shift = if k >= GAMMA_FIRST_ACTION_TERM { spec.action_coef_shift } else { 0.0 };
            std.sample(rng) + shift
        })
        .collect();
    let mut binary_rates = [[0.0; 2]; 2];
    for row in &mut binary_rates {
        for p in row.iter_mut() {
            *p = rng.random_range(0.2..0.8);
        }
    }
    let exam_coef: Vec<f64> = (0..2 + NYC_COVARIATES).map(|_| std.sample(rng)).collect();
    GroundTruth {
        spec: spec.clone(),
        w_sx: spec.w_sx.clone().unwrap_or(w_sx),
        w_x: spec.w_x.clone().unwrap_or(w_x),
        beta: spec.beta.clone().unwrap_or(beta),
        gamma: spec.gamma.clone().unwrap_or(gamma),
        binary_rates,
        exam_coef,
        raw_action_min: 0.0,
        raw_action_max: 1.0,
    }
}

/// Draws a dataset and its ground truth. Identical specs give identical
/// output.
pub fn generate_nyc(spec: &GeneratorSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gt = draw_coefficients(spec, &mut rng);
    let half: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let action_noise =
        Normal::new(0.0, spec.action_noise_sd).map_err(|e| Error::Generation(e.to_string()))?;
    let outcome_noise =
        Normal::new(0.0, spec.outcome_noise_sd).map_err(|e| Error::Generation(e.to_string()))?;

    let n = spec.n;
    let mut s = Vec::with_capacity(n);
    let mut x = Array2::zeros((n, NYC_COVARIATES));
    let mut exam = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let si = u8::from(rng.random::<f64>() < spec.group_rate);
        let xi = [
            f64::from(u8::from(rng.random::<f64>() < gt.binary_rates[0][si as usize])),
            f64::from(u8::from(rng.random::<f64>() < gt.binary_rates[1][si as usize])),
            half.sample(&mut rng).abs(),
        ];
        let e = match spec.exam_rate {
            ExamRateSource::Structural => gt.exam_rate(si, &xi),
            ExamRateSource::Uniform => rng.random::<f64>(),
        };
        raw.push(gt.raw_action_mean(si, &xi) + action_noise.sample(&mut rng));
        for j in 0..NYC_COVARIATES {
            x[[i, j]] = xi[j];
        }
        s.push(si);
        exam.push(e);
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Generation(format!(
            "cannot rescale actions: min {lo} equals max {hi}"
        )));
    }
    gt.raw_action_min = lo;
    gt.raw_action_max = hi;
    let a: Vec<f64> = raw.iter().map(|&r| gt.rescale(r)).collect();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let xi: Vec<f64> = x.row(i).to_vec();
        let mean = 20.0 * exam[i] + gt.linear_part(s[i], &xi, a[i]) + spec.outcome_noise_mean;
        y.push(mean + outcome_noise.sample(&mut rng));
    }
    let ds = Dataset::from_columns(s, x, a, y)
        .map_err(|e| Error::Generation(e.to_string()))?;
    Ok((ds, gt))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Sidecar text for a ground truth: `key=value` lines.
pub fn write_ground_truth(gt: &GroundTruth) -> String {
    let sp = &gt.spec;
    let mut out = String::from("# fairpol ground truth v1\n");
    let exam = match sp.exam_rate {
        ExamRateSource::Structural => "structural",
        ExamRateSource::Uniform => "uniform",
    };
    let rates = [
        gt.binary_rates[0][0],
        gt.binary_rates[0][1],
        gt.binary_rates[1][0],
        gt.binary_rates[1][1],
    ];
    for (k, v) in [
        ("seed", sp.seed.to_string()),
        ("n", sp.n.to_string()),
        ("action_noise_mean", sp.action_noise_mean.to_string()),
        ("action_noise_sd", sp.action_noise_sd.to_string()),
        ("outcome_noise_mean", sp.outcome_noise_mean.to_string()),
        ("outcome_noise_sd", sp.outcome_noise_sd.to_string()),
        ("exam_rate", exam.to_string()),
        ("group_rate", sp.group_rate.to_string()),
        ("action_coef_shift", sp.action_coef_shift.to_string()),
        ("w_sx", join(&gt.w_sx)),
        ("w_x", join(&gt.w_x)),
        ("beta", join(&gt.beta)),
        ("gamma", join(&gt.gamma)),
        ("binary_rates", join(&rates)),
        ("exam_coef", join(&gt.exam_coef)),
        ("raw_action_min", gt.raw_action_min.to_string()),
        ("raw_action_max", gt.raw_action_max.to_string()),
    ] {
        writeln!(out, "{k}={v}").unwrap();
    }
    out
}

pub fn read_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut map = std::collections::BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| contract(format!("ground truth line {}: missing `=`", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        map.get(k)
            .cloned()
            .ok_or_else(|| contract(format!("ground truth missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| contract(format!("ground truth `{k}` is not a number")))
    };
    let vec = |k: &str| -> Result<Vec<f64>> {
        get(k)?
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| contract(format!("ground truth `{k}`: bad value `{t}`"))))
            .collect()
    };
    let exam_rate = match get("exam_rate")?.as_str() {
        "structural" => ExamRateSource::Structural,
        "uniform" => ExamRateSource::Uniform,
        other => return Err(contract(format!("unknown exam_rate `{other}`"))),
    };
    let w_sx = vec("w_sx")?;
    let w_x = vec("w_x")?;
    let beta = vec("beta")?;
    let gamma = vec("gamma")?;
    let rates = vec("binary_rates")?;
    if rates.len() != 4 {
        return Err(contract("binary_rates needs 4 values"));
    }
    let spec = GeneratorSpec {
        seed: get("seed")?.parse().map_err(|_| contract("bad seed"))?,
        n: get("n")?.parse().map_err(|_| contract("bad n"))?,
        w_sx: Some(w_sx.clone()),
        w_x: Some(w_x.clone()),
        beta: Some(beta.clone()),
        gamma: Some(gamma.clone()),
        action_noise_mean: num("action_noise_mean")?,
        action_noise_sd: num("action_noise_sd")?,
        outcome_noise_mean: num("outcome_noise_mean")?,
        outcome_noise_sd: num("outcome_noise_sd")?,
        exam_rate,
        group_rate: num("group_rate")?,
        action_coef_shift: num("action_coef_shift")?,
    };
    spec.validate()?;
    let exam_coef = vec("exam_coef")?;
    if exam_coef.len() != 2 + NYC_COVARIATES {
        return Err(contract("exam_coef needs 5 values"));
    }
    Ok(GroundTruth {
        spec,
        w_sx,
        w_x,
        beta,
        gamma,
        binary_rates: [[rates[0], rates[1]], [rates[2], rates[3]]],
        exam_coef,
        raw_action_min: num("raw_action_min")?,
        raw_action_max: num("raw_action_max")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::write_dataset;

    fn spec(seed: u64, n: usize) -> GeneratorSpec {
        GeneratorSpec {
            seed,
            n,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, ga) = generate_nyc(&spec(5, 500)).unwrap();
        let (b, gb) = generate_nyc(&spec(5, 500)).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_dataset(&a, &mut ba).unwrap();
        write_dataset(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(ga, gb);
        let (c, _) = generate_nyc(&spec(6, 500)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn actions_span_unit_interval() {
        for seed in 0..5 {
            let (ds, _) = generate_nyc(&spec(seed, 300)).unwrap();
            let lo = ds.a().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ds.a().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
    }

    #[test]
    fn single_row_cannot_be_rescaled() {
        assert!(matches!(generate_nyc(&spec(1, 1)), Err(Error::Generation(_))));
    }

    #[test]
    fn zero_action_drops_action_terms() {
        let (_, gt) = generate_nyc(&spec(3, 200)).unwrap();
        let x = [1.0, 0.0, 0.7];
        let s = 1;
        let got = counterfactual_mean_outcome(&gt, s, &x, 0.0).unwrap();
        let b = &gt.beta;
        let no_a = b[0] + b[1] * x[0] + b[2] * x[1] + b[3] * x[2]
            + b[4] * x[0] + b[5] * x[1] + b[6] * x[2]
            + gt.gamma[0] * x[0] + gt.gamma[1] * x[1] + gt.gamma[2] * x[2];
        let expect = 20.0 * gt.exam_rate(s, &x) + no_a + gt.spec.outcome_noise_mean;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn mean_outcome_is_affine_in_action() {
        let (_, gt) = generate_nyc(&spec(4, 200)).unwrap();
        let x = [0.0, 1.0, 1.3];
        let f = |a: f64| counterfactual_mean_outcome(&gt, 0, &x, a).unwrap();
        let h = 1e-3;
        let second = (f(0.5 + h) - 2.0 * f(0.5) + f(0.5 - h)) / (h * h);
        assert!(second.abs() < 1e-4);
        let slope = (f(0.9) - f(0.1)) / 0.8;
        assert!((f(0.3) - (f(0.1) + 0.2 * slope)).abs() < 1e-10);
    }

    #[test]
    fn noise_free_outcomes_match_counterfactual_mean() {
        let mut sp = spec(8, 400);
        sp.outcome_noise_sd = 0.0;
        let (ds, gt) = generate_nyc(&sp).unwrap();
        for r in ds.samples() {
            let m = counterfactual_mean_outcome(&gt, r.s, &r.x, r.a).unwrap();
            assert!((m - r.y).abs() < 1e-10);
        }
    }

    #[test]
    fn arity_mismatch_is_a_contract_error() {
        let (_, gt) = generate_nyc(&spec(1, 100)).unwrap();
        assert!(counterfactual_mean_outcome(&gt, 0, &[1.0], 0.2).is_err());
    }

    #[test]
    fn sidecar_round_trips() {
        let (_, gt) = generate_nyc(&spec(12, 150)).unwrap();
        let back = read_ground_truth(&write_ground_truth(&gt)).unwrap();
        assert_eq!(back.beta, gt.beta);
        assert_eq!(back.raw_action_max, gt.raw_action_max);
        for a in [0.0, 0.4, 1.2] {
            let x = [1.0, 1.0, 0.3];
            assert_eq!(
                counterfactual_mean_outcome(&back, 1, &x, a).unwrap(),
                counterfactual_mean_outcome(&gt, 1, &x, a).unwrap()
            );
        }
    }
}
