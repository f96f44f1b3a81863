//! Utility estimators, baseline outcome, variance estimates and the
//! per-stratum action clipping table.

use std::collections::BTreeMap;

use log::warn;
use ndarray::{Array2, Axis};

use crate::dataio::Dataset;
use crate::error::contract;
use crate::nnet::{AffineNet, Gradients, OutcomeModel, OutputTransform};
use crate::{Error, Result};

/// Floor applied to estimated variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    /// One action per `(s, x)`.
    Deterministic,
    /// Gaussian actions around the net's output with fixed variance.
    GaussianMean,
}

/// A parameterized action mean `mu_A(s, x)`.
///
/// With a clip table the net's raw scalar output `z` is mapped to
/// `lo + (hi - lo) * sigmoid(z)` using the row's stratum interval.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub net: AffineNet,
    pub action_variance: f64,
    pub clipping: Option<ClipTable>,
    /// Zero the group column before it reaches the net.
    pub drop_s: bool,
}

impl PolicySpec {
    pub fn deterministic(net: AffineNet, clipping: Option<ClipTable>) -> Result<Self> {
        Self::build(PolicyKind::Deterministic, net, 0.0, clipping)
    }

    pub fn gaussian(net: AffineNet, action_variance: f64) -> Result<Self> {
        Self::build(PolicyKind::GaussianMean, net, action_variance, None)
    }

    fn build(
        kind: PolicyKind,
        net: AffineNet,
        action_variance: f64,
        clipping: Option<ClipTable>,
    ) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(contract("policy net must have scalar output"));
        }
        if kind == PolicyKind::GaussianMean && !(action_variance > 0.0) {
            return Err(contract("gaussian-mean policy needs action variance > 0"));
        }
        if clipping.is_some() && net.output_transform() != OutputTransform::Identity {
            return Err(contract("clipped policies apply the squashing themselves"));
        }
        Ok(Self {
            kind,
            net,
            action_variance,
            clipping,
            drop_s: false,
        })
    }

    pub fn with_drop_s(mut self, drop_s: bool) -> Self {
        self.drop_s = drop_s;
        self
    }

    fn inputs(&self, dataset: &Dataset) -> Array2<f64> {
        dataset.policy_inputs(self.drop_s)
    }

    /// Mean action for every row.
    pub fn mean_actions(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let inputs = self.inputs(dataset);
        let pre = self.net.forward_batch(inputs.view())?;
        let pre = pre.column(0);
        match &self.clipping {
            None => Ok(pre.to_vec()),
            Some(table) => {
                let iv = table.intervals(dataset)?;
                Ok(pre
                    .iter()
                    .zip(&iv)
                    .map(|(&z, &(lo, hi))| lo + (hi - lo) * sigmoid(z))
                    .collect())
            }
        }
    }

    /// Gradient of `sum_i d_actions[i] * action_i` with respect to the net
    /// parameters, in `params_mut` order.
    pub fn param_gradient(&self, dataset: &Dataset, d_actions: &[f64]) -> Result<Gradients> {
        if d_actions.len() != dataset.len() {
            return Err(contract("one upstream gradient per row required"));
        }
        let inputs = self.inputs(dataset);
        let cache = self.net.forward_cached(inputs.view())?;
        let mut d = Array2::zeros((dataset.len(), 1));
        match &self.clipping {
            None => d.column_mut(0).assign(&ndarray::ArrayView1::from(d_actions)),
            Some(table) => {
                let iv = table.intervals(dataset)?;
                // The net output is the raw pre-activation here (identity transform).
                for (i, &(lo, hi)) in iv.iter().enumerate() {
                    let s = sigmoid(cache.output[[i, 0]]);
                    d[[i, 0]] = d_actions[i] * (hi - lo) * s * (1.0 - s);
                }
            }
        }
        let (grads, _) = self.net.backward(&cache, d.view());
        Ok(AffineNet::flatten_grads(grads))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// An overall value and its per-group breakdown.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Utility {
    pub overall: f64,
    pub per_group: [f64; 2],
}

fn group_means(dataset: &Dataset, values: &[f64]) -> Utility {
    let n = dataset.group_counts();
    let mut sums = [0.0; 2];
    for (&s, v) in dataset.s().iter().zip(values) {
        sums[s as usize] += v;
    }
    Utility {
        overall: (sums[0] + sums[1]) / dataset.len() as f64,
        per_group: [sums[0] / n[0] as f64, sums[1] / n[1] as f64],
    }
}

/// Plug-in utility at explicit actions and the gradient of the overall
/// value with respect to each action.
pub fn plugin_from_actions<M: OutcomeModel>(
    outcome: &M,
    dataset: &Dataset,
    actions: &[f64],
) -> Result<(Utility, Vec<f64>)> {
    let inputs = dataset.outcome_inputs(actions)?;
    let (mu, slope) = outcome.predict_with_action_slope(inputs.view())?;
    let u = group_means(dataset, mu.as_slice().expect("contiguous"));
    let inv = 1.0 / dataset.len() as f64;
    Ok((u, slope.iter().map(|d| d * inv).collect()))
}

/// `(1/N) sum_i mu_Y(policy(s_i, x_i), s_i, x_i)` and the per-group means.
pub fn plugin_utility<M: OutcomeModel>(
    outcome: &M,
    policy: &PolicySpec,
    dataset: &Dataset,
) -> Result<Utility> {
    if policy.kind != PolicyKind::Deterministic {
        return Err(contract("plug-in utility is defined for deterministic policies"));
    }
    let actions = policy.mean_actions(dataset)?;
    Ok(plugin_from_actions(outcome, dataset, &actions)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpwOptions {
    /// Upper clamp on the density ratio; `None` leaves weights unclamped.
    pub clamp: Option<f64>,
    /// Rows whose baseline action density falls below this are dropped.
    pub density_floor: f64,
}

impl Default for IpwOptions {
    fn default() -> Self {
        Self {
            clamp: None,
            density_floor: 1e-12,
        }
    }
}

/// Clamp level used when clamping is switched on without a value.
pub const DEFAULT_IPW_CLAMP: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct IpwEstimate {
    pub utility: Utility,
    /// Rows dropped for baseline-density underflow.
    pub excluded: usize,
}

fn log_normal_density(a: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (a - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// IPW estimate from per-row policy and baseline means, with the gradient
/// of the overall value with respect to each policy mean.
pub fn ipw_from_means(
    dataset: &Dataset,
    mu_sigma: &[f64],
    mu_base: &[f64],
    va: f64,
    opts: &IpwOptions,
) -> Result<(IpwEstimate, Vec<f64>)> {
    let n = dataset.len();
    if mu_sigma.len() != n || mu_base.len() != n {
        return Err(contract("per-row means must align with dataset rows"));
    }
    if !(va > 0.0) {
        return Err(contract(format!("action variance must be > 0, got {va}")));
    }
    let log_floor = opts.density_floor.ln();
    let mut keep = vec![false; n];
    let mut weights = vec![0.0; n];
    let mut dweights = vec![0.0; n];
    let mut counts = [0usize; 2];
    let mut sums = [0.0; 2];
    for i in 0..n {
        let a = dataset.a()[i];
        let lb = log_normal_density(a, mu_base[i], va);
        if lb < log_floor {
            continue;
        }
        let ls = log_normal_density(a, mu_sigma[i], va);
        let mut w = (ls - lb).exp();
        let mut dw = w * (a - mu_sigma[i]) / va;
        if let Some(c) = opts.clamp {
            if w > c {
                w = c;
                dw = 0.0;
            }
        }
        keep[i] = true;
        weights[i] = w;
        dweights[i] = dw;
        let s = dataset.s()[i] as usize;
        counts[s] += 1;
        sums[s] += dataset.y()[i] * w;
    }
    let excluded = n - counts[0] - counts[1];
    if excluded > 0 {
        warn!("IPW: {excluded} of {n} rows below the baseline density floor");
    }
    if counts.contains(&0) {
        return Err(Error::Estimation(format!(
            "IPW has no usable rows in some group (kept {counts:?})"
        )));
    }
    let total = (counts[0] + counts[1]) as f64;
    let utility = Utility {
        overall: (sums[0] + sums[1]) / total,
        per_group: [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64],
    };
    let grad = (0..n)
        .map(|i| if keep[i] { dataset.y()[i] * dweights[i] / total } else { 0.0 })
        .collect();
    Ok((IpwEstimate { utility, excluded }, grad))
}

/// `(1/N) sum_i y_i N(a_i; mu_sigma, vA) / N(a_i; mu_base, vA)`, per-group
/// values normalized by the group size.
pub fn ipw_utility(
    dataset: &Dataset,
    policy: &PolicySpec,
    baseline_mu: &[f64],
    va: f64,
    opts: &IpwOptions,
) -> Result<IpwEstimate> {
    if policy.kind != PolicyKind::GaussianMean {
        return Err(contract("IPW needs a gaussian-mean policy"));
    }
    let mu = policy.mean_actions(dataset)?;
    Ok(ipw_from_means(dataset, &mu, baseline_mu, va, opts)?.0)
}

/// `mu_Y(mu_A_base(s, x), s, x)` for one point.
pub fn map_baseline_outcome<M: OutcomeModel>(
    outcome: &M,
    baseline_net: &AffineNet,
    s: u8,
    x: &[f64],
) -> Result<f64> {
    let mut pin = vec![f64::from(s)];
    pin.extend_from_slice(x);
    let a = baseline_net.forward(&pin)?;
    if a.len() != 1 {
        return Err(contract("baseline net must have scalar output"));
    }
    let mut oin = vec![a[0], f64::from(s)];
    oin.extend_from_slice(x);
    let view = ndarray::ArrayView2::from_shape((1, oin.len()), &oin)
        .map_err(|e| contract(e.to_string()))?;
    Ok(outcome.predict(view)?[0])
}

/// Batched [`map_baseline_outcome`] over every row.
pub fn map_baseline_outcomes<M: OutcomeModel>(
    outcome: &M,
    baseline_net: &AffineNet,
    dataset: &Dataset,
) -> Result<Vec<f64>> {
    let base_a = baseline_net.forward_batch(dataset.policy_inputs(false).view())?;
    let base_a: Vec<f64> = base_a.column(0).to_vec();
    Ok(outcome.predict(dataset.outcome_inputs(&base_a)?.view())?.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceEstimates {
    pub va: f64,
    pub vy: f64,
}

fn mean_square(r: &[f64], what: &str) -> Result<f64> {
    if r.is_empty() {
        return Err(contract(format!("no {what} residuals")));
    }
    let v = r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64;
    if v < VARIANCE_FLOOR {
        warn!("{what} variance {v} floored at {VARIANCE_FLOOR}");
        return Ok(VARIANCE_FLOOR);
    }
    Ok(v)
}

/// Mean squared residual of each model, floored at [`VARIANCE_FLOOR`].
pub fn estimate_variances(action_resid: &[f64], outcome_resid: &[f64]) -> Result<VarianceEstimates> {
    Ok(VarianceEstimates {
        va: mean_square(action_resid, "action")?,
        vy: mean_square(outcome_resid, "outcome")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipConfig {
    /// Quantile bins per continuous covariate.
    pub bins: usize,
    pub eta: f64,
    /// Strata with fewer rows fall back to their group-wide interval.
    pub min_rows: usize,
    /// Width used when a stratum has a single distinct action.
    pub floor_width: f64,
    /// Key strata by group as well as by covariate bins.
    pub use_s: bool,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            bins: 2,
            eta: 1.0,
            min_rows: 10,
            floor_width: 0.1,
            use_s: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Binning {
    Binary,
    /// Interior cut points; bin = number of cuts strictly below the value.
    Quantile(Vec<f64>),
}

impl Binning {
    fn bin(&self, v: f64) -> u16 {
        match self {
            Binning::Binary => u16::from(v > 0.5),
            Binning::Quantile(cuts) => cuts.partition_point(|&c| c < v) as u16,
        }
    }
}

type StratumKey = (u8, Vec<u16>);

/// Action interval per stratum `(s, binned x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipTable {
    pub eta: f64,
    use_s: bool,
    binning: Vec<Binning>,
    strata: BTreeMap<StratumKey, (f64, f64)>,
    /// Fallback interval per group (both entries equal without `use_s`).
    global: [(f64, f64); 2],
}

fn widened(lo: f64, hi: f64, eta: f64, floor_width: f64, label: &str) -> (f64, f64) {
    let gap = hi - lo;
    if gap <= 0.0 {
        warn!("stratum {label} has a single action {lo}; widening by {floor_width}");
        return (lo - 0.5 * floor_width, hi + 0.5 * floor_width);
    }
    (lo - eta * gap, hi + eta * gap)
}

impl ClipTable {
    fn key(&self, s: u8, x: &[f64]) -> StratumKey {
        let s = if self.use_s { s } else { 0 };
        (s, self.binning.iter().zip(x).map(|(b, &v)| b.bin(v)).collect())
    }

    pub fn interval(&self, s: u8, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.binning.len() {
            return Err(contract(format!(
                "clip table built for {} covariates, got {}",
                self.binning.len(),
                x.len()
            )));
        }
        let k = self.key(s, x);
        Ok(*self.strata.get(&k).unwrap_or(&self.global[k.0 as usize]))
    }

    pub fn intervals(&self, dataset: &Dataset) -> Result<Vec<(f64, f64)>> {
        let x = dataset.x();
        (0..dataset.len())
            .map(|i| self.interval(dataset.s()[i], x.row(i).as_slice().expect("row-major")))
            .collect()
    }

    /// Number of strata with their own interval.
    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }
}

/// Per stratum, `[min a - eta * gap, max a + eta * gap]` with `gap = max -
/// min` over the stratum's observed actions.
pub fn clip_interval(dataset: &Dataset, cfg: &ClipConfig) -> Result<ClipTable> {
    if cfg.bins == 0 || !(cfg.eta >= 0.0) || !(cfg.floor_width > 0.0) {
        return Err(contract("clip config needs bins >= 1, eta >= 0, floor width > 0"));
    }
    let x = dataset.x();
    let binning: Vec<Binning> = x
        .axis_iter(Axis(1))
        .map(|col| {
            if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                return Binning::Binary;
            }
            let mut v = col.to_vec();
            v.sort_by(f64::total_cmp);
            let cuts = (1..cfg.bins)
                .map(|q| v[(q * v.len() / cfg.bins).min(v.len() - 1)])
                .collect();
            Binning::Quantile(cuts)
        })
        .collect();
    let mut table = ClipTable {
        eta: cfg.eta,
        use_s: cfg.use_s,
        binning,
        strata: BTreeMap::new(),
        global: [(0.0, 0.0); 2],
    };
    let mut ranges: BTreeMap<StratumKey, (f64, f64, usize)> = BTreeMap::new();
    let mut global = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for i in 0..dataset.len() {
        let a = dataset.a()[i];
        let key = table.key(dataset.s()[i], x.row(i).as_slice().expect("row-major"));
        let g = &mut global[key.0 as usize];
        *g = (g.0.min(a), g.1.max(a));
        let e = ranges.entry(key).or_insert((f64::INFINITY, f64::NEG_INFINITY, 0));
        *e = (e.0.min(a), e.1.max(a), e.2 + 1);
    }
    for s in 0..2 {
        let (lo, hi) = global[s];
        if lo.is_finite() {
            table.global[s] = widened(lo, hi, cfg.eta, cfg.floor_width, &format!("s={s}"));
        }
    }
    if !cfg.use_s {
        table.global[1] = table.global[0];
    }
    for (key, (lo, hi, count)) in ranges {
        if count >= cfg.min_rows {
            let label = format!("{key:?}");
            table.strata.insert(key, widened(lo, hi, cfg.eta, cfg.floor_width, &label));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Sample;
    use crate::nnet::{net_init, Layer};
    use ndarray::{array, Array1};

    fn ds(rows: &[(u8, f64, f64, f64)]) -> Dataset {
        let samples: Vec<Sample> = rows
            .iter()
            .map(|&(s, x, a, y)| Sample { s, x: vec![x], a, y })
            .collect();
        Dataset::from_samples(&samples).unwrap()
    }

    fn constant_net(inputs: usize, c: f64) -> AffineNet {
        AffineNet::from_layers(
            vec![Layer {
                weights: Array2::zeros((1, inputs)),
                bias: Array1::from_elem(1, c),
            }],
            OutputTransform::Identity,
        )
        .unwrap()
    }

    #[test]
    fn clip_single_stratum_formula() {
        let cfg = ClipConfig { min_rows: 1, ..ClipConfig::default() };
        let d = ds(&[(0, 1.0, 0.2, 0.0), (0, 1.0, 0.6, 0.0), (1, 0.0, 0.5, 0.0)]);
        let t = clip_interval(&d, &cfg).unwrap();
        let (lo, hi) = t.interval(0, &[1.0]).unwrap();
        assert!((lo + 0.2).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let t0 = clip_interval(&d, &ClipConfig { eta: 0.0, ..cfg }).unwrap();
        assert_eq!(t0.interval(0, &[1.0]).unwrap(), (0.2, 0.6));
        // Single action: widened by the floor.
        let (lo, hi) = t.interval(1, &[0.0]).unwrap();
        assert!((hi - lo - cfg.floor_width).abs() < 1e-12);
    }

    #[test]
    fn small_strata_fall_back_to_group() {
        let cfg = ClipConfig { min_rows: 2, eta: 0.0, ..ClipConfig::default() };
        let d = ds(&[(0, 1.0, 0.2, 0.0), (0, 1.0, 0.6, 0.0), (0, 0.0, 0.9, 0.0), (1, 0.0, 0.5, 0.0)]);
        let t = clip_interval(&d, &cfg).unwrap();
        assert_eq!(t.interval(0, &[1.0]).unwrap(), (0.2, 0.6));
        assert_eq!(t.interval(0, &[0.0]).unwrap(), (0.2, 0.9));
    }

    #[test]
    fn plugin_constant_and_decomposition() {
        let d = ds(&[(0, 1.0, 0.2, 0.0), (1, 2.0, 0.6, 0.0), (0, 3.0, 0.1, 0.0)]);
        let pol = PolicySpec::deterministic(constant_net(2, 0.4), None).unwrap();
        let u = plugin_utility(&constant_net(3, 7.5), &pol, &d).unwrap();
        assert_eq!(u.overall, 7.5);
        let lin = AffineNet::from_layers(
            vec![Layer { weights: array![[2.0, 1.0, -1.0]], bias: array![0.5] }],
            OutputTransform::Identity,
        )
        .unwrap();
        let u = plugin_utility(&lin, &pol, &d).unwrap();
        let direct: Vec<f64> = d
            .samples()
            .map(|r| 2.0 * 0.4 + f64::from(r.s) - r.x[0] + 0.5)
            .collect();
        let mean: f64 = direct.iter().sum::<f64>() / 3.0;
        assert!((u.overall - mean).abs() < 1e-12);
        let weighted = (2.0 * u.per_group[0] + u.per_group[1]) / 3.0;
        assert!((u.overall - weighted).abs() < 1e-12);
    }

    #[test]
    fn ipw_identical_policies_is_mean_y() {
        let d = ds(&[(0, 1.0, 0.2, 3.0), (1, 2.0, 0.6, 5.0), (0, 3.0, 0.1, 4.0)]);
        let mu = vec![0.3, 0.5, 0.2];
        let (e, _) = ipw_from_means(&d, &mu, &mu, 0.04, &IpwOptions::default()).unwrap();
        assert!((e.utility.overall - 4.0).abs() < 1e-12);
        assert!((e.utility.per_group[0] - 3.5).abs() < 1e-12);
        assert_eq!(e.utility.per_group[1], 5.0);
    }

    #[test]
    fn ipw_single_row_weight_and_clamp() {
        let d = ds(&[(0, 1.0, 0.0, 2.0), (1, 1.0, 0.0, 0.0)]);
        let (va, ms, mb) = (1.0, 0.5, 1.0);
        let w = (-(0.5f64.powi(2)) / 2.0 + 1.0 / 2.0).exp();
        let (e, _) = ipw_from_means(&d, &[ms, mb], &[mb, mb], va, &IpwOptions::default()).unwrap();
        assert!((e.utility.per_group[0] - 2.0 * w).abs() < 1e-12);
        let clamp = IpwOptions { clamp: Some(1.1), ..IpwOptions::default() };
        let (e, _) = ipw_from_means(&d, &[ms, mb], &[mb, mb], va, &clamp).unwrap();
        assert!((e.utility.per_group[0] - 2.2).abs() < 1e-12);
    }

    #[test]
    fn ipw_gradient_matches_finite_difference() {
        let d = ds(&[(0, 1.0, 0.2, 3.0), (1, 2.0, 0.6, 5.0), (0, 3.0, 0.1, 4.0), (1, 0.0, 0.4, -1.0)]);
        let base = vec![0.3, 0.5, 0.2, 0.3];
        let mu = vec![0.35, 0.45, 0.1, 0.5];
        let o = IpwOptions::default();
        let (_, g) = ipw_from_means(&d, &mu, &base, 0.05, &o).unwrap();
        for i in 0..4 {
            let h = 1e-6;
            let mut up = mu.clone();
            up[i] += h;
            let mut dn = mu.clone();
            dn[i] -= h;
            let fu = ipw_from_means(&d, &up, &base, 0.05, &o).unwrap().0.utility.overall;
            let fd = ipw_from_means(&d, &dn, &base, 0.05, &o).unwrap().0.utility.overall;
            assert!(((fu - fd) / (2.0 * h) - g[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn underflow_rows_excluded() {
        let d = ds(&[(0, 1.0, 0.2, 3.0), (1, 2.0, 0.6, 5.0), (0, 3.0, 50.0, 4.0)]);
        let mu = vec![0.2, 0.6, 0.0];
        let (e, _) = ipw_from_means(&d, &mu, &mu, 0.01, &IpwOptions::default()).unwrap();
        assert_eq!(e.excluded, 1);
        assert_eq!(e.utility.per_group[0], 3.0);
    }

    #[test]
    fn map_baseline_constant_action() {
        let base = constant_net(2, 0.7);
        let lin = AffineNet::from_layers(
            vec![Layer { weights: array![[3.0, 1.0, 0.5]], bias: array![0.0] }],
            OutputTransform::Identity,
        )
        .unwrap();
        let v = map_baseline_outcome(&lin, &base, 1, &[2.0]).unwrap();
        assert!((v - (3.0 * 0.7 + 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn variance_estimates() {
        let v = estimate_variances(&[1.5, -1.5], &[2.0, -2.0, 2.0]).unwrap();
        assert!((v.va - 2.25).abs() < 1e-12 && (v.vy - 4.0).abs() < 1e-12);
        assert_eq!(estimate_variances(&[0.0], &[1.0]).unwrap().va, VARIANCE_FLOOR);
        assert!(estimate_variances(&[], &[1.0]).is_err());
    }

    #[test]
    fn clipped_policy_gradient_matches_finite_difference() {
        let d = ds(&[(0, 1.0, 0.2, 0.0), (1, 2.0, 0.6, 0.0), (0, 3.0, 0.1, 0.0), (1, 0.5, 0.9, 0.0)]);
        let cfg = ClipConfig { min_rows: 1, ..ClipConfig::default() };
        let t = clip_interval(&d, &cfg).unwrap();
        let net = net_init(4, &[2, 5, 1], OutputTransform::Identity).unwrap();
        let pol = PolicySpec::deterministic(net, Some(t)).unwrap();
        let up = [0.3, -1.0, 2.0, 0.5];
        let g = pol.param_gradient(&d, &up).unwrap();
        let f = |p: &PolicySpec| -> f64 {
            p.mean_actions(&d).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for (t_idx, tensor) in g.0.iter().enumerate() {
            for (k, &gk) in tensor.iter().enumerate() {
                let mut plus = pol.clone();
                let mut minus = pol.clone();
                use crate::nnet::Regressor;
                plus.net.params_mut()[t_idx][k] += h;
                minus.net.params_mut()[t_idx][k] -= h;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                assert!((fd - gk).abs() < 1e-6, "{fd} vs {gk}");
            }
        }
    }
}
