//! Disparity statistics: moderation breaking, the equal-benefit CDF bounds,
//! and the Fréchet–Hoeffding copula bound.

use std::io::Write;

use crate::dataio::Dataset;
use crate::error::contract;
use crate::estimators::PolicySpec;
use crate::nnet::StructuredOutcomeNet;
use crate::Result;

/// Default number of points in the equal-benefit grid.
pub const DEFAULT_GRID_POINTS: usize = 41;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One value per unordered group pair. With a binary attribute there is
/// exactly one pair, `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseConstraint {
    pairs: Vec<(u8, u8, f64)>,
}

impl PairwiseConstraint {
    pub fn binary(value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(contract(format!("constraint value must be >= 0, got {value}")));
        }
        Ok(Self {
            pairs: vec![(0, 1, value)],
        })
    }

    /// Value for the pair `{s, t}` in either order.
    pub fn get(&self, s: u8, t: u8) -> Option<f64> {
        self.pairs
            .iter()
            .find(|&&(a, b, _)| (a, b) == (s, t) || (b, a) == (s, t))
            .map(|p| p.2)
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.2).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.pairs.iter().fold(0.0, |m, p| m.max(p.2))
    }
}

fn group_sizes(groups: &[u8]) -> Result<[usize; 2]> {
    let mut n = [0usize; 2];
    for &s in groups {
        if s > 1 {
            return Err(contract(format!("group label {s} not in {{0,1}}")));
        }
        n[s as usize] += 1;
    }
    if n.contains(&0) {
        return Err(contract(format!("both groups must be present, counts {n:?}")));
    }
    Ok(n)
}

/// Squared difference of group means of `g` and its gradient with respect
/// to every per-row value of `g`.
fn squared_group_gap(groups: &[u8], g: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = group_sizes(groups)?;
    let mut sums = [0.0; 2];
    for (&s, &v) in groups.iter().zip(g) {
        sums[s as usize] += v;
    }
    let gap = sums[0] / n[0] as f64 - sums[1] / n[1] as f64;
    let grad = groups
        .iter()
        .map(|&s| {
            let sign = if s == 0 { 1.0 } else { -1.0 };
            2.0 * gap * sign / n[s as usize] as f64
        })
        .collect();
    Ok((gap * gap, grad))
}

/// Moderation-breaking statistic at the given per-row actions, with its
/// gradient with respect to each action.
pub fn modbrk_from_actions(
    outcome: &StructuredOutcomeNet,
    dataset: &Dataset,
    actions: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let inputs = dataset.outcome_inputs(actions)?;
    let (g, dg_da) = outcome.g_with_action_slope(inputs.view())?;
    let (value, dv_dg) = squared_group_gap(dataset.s(), g.as_slice().expect("contiguous"))?;
    let grad = dv_dg.iter().zip(dg_da.iter()).map(|(a, b)| a * b).collect();
    Ok((value, grad))
}

/// `(mean_{s=0} g(a_i, 0, x_i) - mean_{s=1} g(a_i, 1, x_i))^2` with `a_i`
/// the policy's (mean) action.
pub fn modbrk_value(
    outcome: &StructuredOutcomeNet,
    policy: &PolicySpec,
    dataset: &Dataset,
) -> Result<PairwiseConstraint> {
    let actions = policy.mean_actions(dataset)?;
    PairwiseConstraint::binary(modbrk_from_actions(outcome, dataset, &actions)?.0)
}

/// Conditional law of `Y_new - Y_base` given `(s, x)` under a bivariate
/// Gaussian with common variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffGaussianParams {
    pub mu_diff: f64,
    pub variance: f64,
    pub rho: f64,
}

impl DiffGaussianParams {
    pub fn new(mu_diff: f64, variance: f64, rho: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(contract(format!("variance must be > 0, got {variance}")));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(contract(format!("rho must lie in [-1, 1], got {rho}")));
        }
        Ok(Self {
            mu_diff,
            variance,
            rho,
        })
    }
}

/// `P(Y_new - Y_base <= z)`; at `rho = 1` the difference is the point mass
/// at `mu_diff`, with 0.5 returned at the atom.
pub fn gaussian_diff_cdf(z: f64, p: &DiffGaussianParams) -> Result<f64> {
    let p = DiffGaussianParams::new(p.mu_diff, p.variance, p.rho)?;
    let scale2 = 2.0 * p.variance * (1.0 - p.rho);
    let d = z - p.mu_diff;
    if scale2 <= 0.0 {
        return Ok(if d > 0.0 {
            1.0
        } else if d < 0.0 {
            0.0
        } else {
            0.5
        });
    }
    Ok(std_normal_cdf(d / scale2.sqrt()))
}

/// Lower and upper bound at `z` together with their derivatives with
/// respect to `mu_diff`. Assumes `variance > 0`.
fn tight_bounds_with_slope(z: f64, mu_diff: f64, variance: f64) -> [f64; 4] {
    let sd = 2.0 * variance.sqrt();
    let t = (z - mu_diff) / sd;
    let slope = -std_normal_pdf(t) / sd;
    if z > mu_diff {
        [std_normal_cdf(t), 1.0, slope, 0.0]
    } else if z < mu_diff {
        [0.0, std_normal_cdf(t), 0.0, slope]
    } else {
        [0.5, 0.5, 0.0, 0.0]
    }
}

/// Tightest bounds on the difference CDF over all correlations: the
/// anti-correlated (`rho = -1`) curve on one side of `mu_diff` and the
/// degenerate `rho = 1` step on the other.
pub fn tight_bounds_point(z: f64, mu_diff: f64, variance: f64) -> Result<(f64, f64)> {
    if !(variance > 0.0) {
        return Err(contract(format!("variance must be > 0, got {variance}")));
    }
    let b = tight_bounds_with_slope(z, mu_diff, variance);
    Ok((b[0], b[1]))
}

/// Per-group averaged lower/upper bound curves over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurves {
    pub grid: Vec<f64>,
    /// Indexed `[s][k]`.
    pub lower: [Vec<f64>; 2],
    pub upper: [Vec<f64>; 2],
}

impl BoundCurves {
    /// CSV with header `z,FL_s0,FU_s0,FL_s1,FU_s1`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["z", "FL_s0", "FU_s0", "FL_s1", "FU_s1"])?;
        for (k, z) in self.grid.iter().enumerate() {
            w.write_record([
                z.to_string(),
                self.lower[0][k].to_string(),
                self.upper[0][k].to_string(),
                self.lower[1][k].to_string(),
                self.upper[1][k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(contract("grid must not be empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(contract("grid must be strictly increasing"));
    }
    Ok(())
}

/// Equally spaced grid covering every row's anti-correlated difference law
/// out to three standard deviations.
pub fn default_grid(mu_diff: &[f64], variance: f64, points: usize) -> Result<Vec<f64>> {
    if mu_diff.is_empty() || points < 2 || !(variance > 0.0) {
        return Err(contract("grid needs rows, at least 2 points and variance > 0"));
    }
    let lo = mu_diff.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu_diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 3.0 * (4.0 * variance).sqrt();
    let (lo, hi) = (lo - pad, hi + pad);
    Ok((0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect())
}

/// Bound curves from per-row differences `mu_diff[i]` and group labels.
pub fn eqb_curves_from_diff(
    groups: &[u8],
    mu_diff: &[f64],
    variance: f64,
    grid: &[f64],
) -> Result<BoundCurves> {
    Ok(curves_and_slopes(groups, mu_diff, variance, grid, false)?.0)
}

/// `F^L_s`, `F^U_s` as group averages of the pointwise tight bounds at
/// `mu_diff_i = mu_sigma_i - mu_base_i`.
pub fn eqb_curves(
    dataset: &Dataset,
    mu_sigma: &[f64],
    mu_base: &[f64],
    variance: f64,
    grid: &[f64],
) -> Result<BoundCurves> {
    if mu_sigma.len() != dataset.len() || mu_base.len() != dataset.len() {
        return Err(contract("per-row means must align with dataset rows"));
    }
    let diff: Vec<f64> = mu_sigma.iter().zip(mu_base).map(|(a, b)| a - b).collect();
    eqb_curves_from_diff(dataset.s(), &diff, variance, grid)
}

type Slopes = Vec<[f64; 2]>;

/// Curves plus, when asked, per-row-per-grid-point slopes flattened as
/// `slopes[i * K + k] = [dl/dmu, du/dmu]`.
fn curves_and_slopes(
    groups: &[u8],
    mu_diff: &[f64],
    variance: f64,
    grid: &[f64],
    want_slopes: bool,
) -> Result<(BoundCurves, Slopes)> {
    if groups.len() != mu_diff.len() {
        return Err(contract("group labels and means differ in length"));
    }
    if !(variance > 0.0) {
        return Err(contract(format!("variance must be > 0, got {variance}")));
    }
    check_grid(grid)?;
    let n = group_sizes(groups)?;
    let k = grid.len();
    let mut lower = [vec![0.0; k], vec![0.0; k]];
    let mut upper = [vec![0.0; k], vec![0.0; k]];
    let mut slopes = if want_slopes { vec![[0.0; 2]; mu_diff.len() * k] } else { Vec::new() };
    for (i, (&s, &mu)) in groups.iter().zip(mu_diff).enumerate() {
        let s = s as usize;
        for (j, &z) in grid.iter().enumerate() {
            let b = tight_bounds_with_slope(z, mu, variance);
            lower[s][j] += b[0];
            upper[s][j] += b[1];
            if want_slopes {
                slopes[i * k + j] = [b[2], b[3]];
            }
        }
    }
    for s in 0..2 {
        let inv = 1.0 / n[s] as f64;
        lower[s].iter_mut().for_each(|v| *v *= inv);
        upper[s].iter_mut().for_each(|v| *v *= inv);
    }
    Ok((
        BoundCurves {
            grid: grid.to_vec(),
            lower,
            upper,
        },
        slopes,
    ))
}

/// Sum over the grid of squared group differences of both bound curves.
pub fn eqb_value(curves: &BoundCurves) -> Result<PairwiseConstraint> {
    let k = curves.grid.len();
    let aligned = curves
        .lower
        .iter()
        .chain(&curves.upper)
        .all(|c| c.len() == k);
    if !aligned {
        return Err(contract("bound curves do not match the grid length"));
    }
    let v: f64 = (0..k)
        .map(|j| {
            (curves.lower[0][j] - curves.lower[1][j]).powi(2)
                + (curves.upper[0][j] - curves.upper[1][j]).powi(2)
        })
        .sum();
    PairwiseConstraint::binary(v)
}

/// Equal-benefit value and its gradient with respect to each row's
/// `mu_diff`.
pub fn eqb_value_and_grad(
    groups: &[u8],
    mu_diff: &[f64],
    variance: f64,
    grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (c, slopes) = curves_and_slopes(groups, mu_diff, variance, grid, true)?;
    let n = group_sizes(groups)?;
    let k = grid.len();
    let dl: Vec<f64> = (0..k).map(|j| 2.0 * (c.lower[0][j] - c.lower[1][j])).collect();
    let du: Vec<f64> = (0..k).map(|j| 2.0 * (c.upper[0][j] - c.upper[1][j])).collect();
    let grad = groups
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let w = if s == 0 { 1.0 } else { -1.0 } / n[s as usize] as f64;
            let row = &slopes[i * k..(i + 1) * k];
            w * (0..k).map(|j| dl[j] * row[j][0] + du[j] * row[j][1]).sum::<f64>()
        })
        .collect();
    Ok((eqb_value(&c)?.max(), grad))
}

/// Bounds on a copula `C(u, v)` from the Fréchet–Hoeffding theorem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrechetBound {
    pub lower: f64,
    pub upper: f64,
}

pub fn frechet_bounds(u: f64, v: f64) -> Result<FrechetBound> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(contract(format!("({u}, {v}) not in the unit square")));
    }
    Ok(FrechetBound {
        lower: (u + v - 1.0).max(0.0),
        upper: u.min(v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_reference_values() {
        // Values from a 30-digit erf evaluation.
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((std_normal_cdf(-2.5) - 0.006_209_665_325_776_132).abs() < 1e-15);
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn diff_cdf_cases() {
        let p = DiffGaussianParams::new(0.3, 2.0, 0.25).unwrap();
        assert_eq!(gaussian_diff_cdf(0.3, &p).unwrap(), 0.5);
        let one_sd = 0.3 + (2.0 * 2.0 * 0.75_f64).sqrt();
        assert!((gaussian_diff_cdf(one_sd, &p).unwrap() - 0.841_345).abs() < 1e-6);
        let deg = DiffGaussianParams::new(0.3, 2.0, 1.0).unwrap();
        assert_eq!(gaussian_diff_cdf(0.5, &deg).unwrap(), 1.0);
        assert_eq!(gaussian_diff_cdf(0.1, &deg).unwrap(), 0.0);
        assert_eq!(gaussian_diff_cdf(0.3, &deg).unwrap(), 0.5);
        assert!(DiffGaussianParams::new(0.0, 0.0, 0.0).is_err());
        let bad = DiffGaussianParams { mu_diff: 0.0, variance: -1.0, rho: 0.0 };
        assert!(gaussian_diff_cdf(0.0, &bad).is_err());
    }

    #[test]
    fn tight_bounds_sides() {
        assert_eq!(tight_bounds_point(1.0, 0.0, 1.0).unwrap().1, 1.0);
        assert_eq!(tight_bounds_point(-1.0, 0.0, 1.0).unwrap().0, 0.0);
        assert_eq!(tight_bounds_point(0.0, 0.0, 1.0).unwrap(), (0.5, 0.5));
        let (l, _) = tight_bounds_point(2.0, 0.0, 1.0).unwrap();
        assert!((l - std_normal_cdf(1.0)).abs() < 1e-15);
    }

    #[test]
    fn equal_means_give_step_curves() {
        let groups = [0, 1, 0, 1];
        let grid = [-1.0, 0.0, 1.0];
        let c = eqb_curves_from_diff(&groups, &[0.0; 4], 1.0, &grid).unwrap();
        for s in 0..2 {
            assert_eq!(c.lower[s][0], 0.0);
            assert_eq!(c.upper[s][2], 1.0);
            assert_eq!((c.lower[s][1], c.upper[s][1]), (0.5, 0.5));
        }
        assert_eq!(eqb_value(&c).unwrap().max(), 0.0);
    }

    #[test]
    fn two_row_mixture_averages() {
        let groups = [0, 0, 1];
        let grid = [-0.5, 0.2, 1.5];
        let c = eqb_curves_from_diff(&groups, &[0.0, 1.0, 0.4], 0.7, &grid).unwrap();
        for (j, &z) in grid.iter().enumerate() {
            let a = tight_bounds_point(z, 0.0, 0.7).unwrap();
            let b = tight_bounds_point(z, 1.0, 0.7).unwrap();
            assert!((c.lower[0][j] - 0.5 * (a.0 + b.0)).abs() < 1e-15);
            assert!((c.upper[0][j] - 0.5 * (a.1 + b.1)).abs() < 1e-15);
            assert_eq!(c.lower[1][j], tight_bounds_point(z, 0.4, 0.7).unwrap().0);
        }
    }

    #[test]
    fn eqb_value_arithmetic() {
        let c = BoundCurves {
            grid: vec![0.0, 1.0, 2.0],
            lower: [vec![0.1, 0.2, 0.3], vec![0.1, 0.2 + 0.05, 0.3 + 0.05]],
            upper: [vec![0.5, 0.6, 0.7], vec![0.5, 0.6 + 0.05, 0.7 + 0.05]],
        };
        // Two grid points differ by 0.05 in both bounds: 2 * 2 * 0.05^2.
        assert!((eqb_value(&c).unwrap().max() - 0.01).abs() < 1e-15);
        let mut bad = c.clone();
        bad.upper[1].pop();
        assert!(eqb_value(&bad).is_err());
    }

    #[test]
    fn grid_and_group_contracts() {
        assert!(eqb_curves_from_diff(&[0, 1], &[0.0, 0.0], 1.0, &[1.0, 1.0]).is_err());
        assert!(eqb_curves_from_diff(&[0, 0], &[0.0, 0.0], 1.0, &[1.0]).is_err());
        assert!(eqb_curves_from_diff(&[0, 1], &[0.0, 0.0], 0.0, &[1.0]).is_err());
    }

    #[test]
    fn frechet_examples() {
        let b = frechet_bounds(0.3, 0.4).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.3));
        let b = frechet_bounds(1.0, 0.375).unwrap();
        assert_eq!((b.lower, b.upper), (0.375, 0.375));
        let b = frechet_bounds(0.7, 0.8).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-15);
        assert_eq!(b.upper, 0.7);
        assert!(frechet_bounds(1.1, 0.2).is_err());
    }

    #[test]
    fn pairwise_is_symmetric() {
        let c = PairwiseConstraint::binary(0.25).unwrap();
        assert_eq!(c.get(0, 1), c.get(1, 0));
        assert!(PairwiseConstraint::binary(-1.0).is_err());
    }

    #[test]
    fn group_gap_oracle() {
        // Group means 2 and 5 -> (2 - 5)^2.
        let (v, _) = squared_group_gap(&[0, 1, 0, 1], &[1.0, 4.0, 3.0, 6.0]).unwrap();
        assert_eq!(v, 9.0);
        let (v2, _) = squared_group_gap(&[1, 0, 1, 0], &[1.0, 4.0, 3.0, 6.0]).unwrap();
        assert_eq!(v, v2);
    }
}
