//! Cross-module invariants as property tests, plus sampling oracles for
//! the generator and the estimators.

use fairpol::constraints::{
    eqb_curves_from_diff, eqb_value, frechet_bounds, default_grid, BoundCurves,
};
use fairpol::dataio::{
    bootstrap, counterfactual_mean_outcome, generate_nyc, read_dataset, write_dataset, Dataset,
    ExamRateSource, GeneratorSpec,
};
use fairpol::estimators::{
    clip_interval, ipw_from_means, map_baseline_outcome, plugin_from_actions, ClipConfig,
    IpwOptions,
};
use fairpol::lagrangian::{multiplier_update, penalty_phi};
use fairpol::lpsolve::{max_violation, solve_problem, DiscreteProblem, LpStatus};
use fairpol::nnet::{
    net_init, policy_forward_clipped, Gradients, OutcomeModel, OutputTransform, Regressor,
    StructuredOutcomeNet,
};
use fairpol::Result;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn dataset_from(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let a = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    Dataset::from_columns(s, x, a, y).unwrap()
}

fn structured(seed: u64, d: usize) -> StructuredOutcomeNet {
    let id = OutputTransform::Identity;
    StructuredOutcomeNet::new(
        net_init(seed, &[d + 1, 5, 1], id).unwrap(),
        net_init(seed + 1, &[d + 2, 5, 1], id).unwrap(),
        net_init(seed + 2, &[d + 1, 5, 1], id).unwrap(),
    )
    .unwrap()
}

fn check_curves(c: &BoundCurves) {
    for s in 0..2 {
        for k in 0..c.grid.len() {
            assert!((0.0..=1.0).contains(&c.lower[s][k]));
            assert!((0.0..=1.0).contains(&c.upper[s][k]));
            assert!(c.lower[s][k] <= c.upper[s][k] + 1e-15);
            if k > 0 {
                assert!(c.lower[s][k] >= c.lower[s][k - 1] - 1e-15);
                assert!(c.upper[s][k] >= c.upper[s][k - 1] - 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structured_sum_and_input_restrictions(
        seed in 0u64..1000,
        a in -2.0f64..2.0,
        da in 0.1f64..1.0,
        x in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let net = structured(seed, 3);
        for s in [0.0, 1.0] {
            let v = net.structured_forward(a, s, &x).unwrap();
            prop_assert_eq!(v.sum, v.f + v.g + v.h);
            let moved = net.structured_forward(a + da, s, &x).unwrap();
            prop_assert_eq!(moved.f, v.f);
            let flipped = net.structured_forward(a, 1.0 - s, &x).unwrap();
            prop_assert_eq!(flipped.h, v.h);
        }
    }

    #[test]
    fn clipped_policy_stays_inside(
        seed in 0u64..1000,
        lo in -3.0f64..1.0,
        width in 0.05f64..3.0,
        s in 0u8..2,
        x in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let net = net_init(seed, &[3, 6, 1], OutputTransform::Identity).unwrap();
        let v = policy_forward_clipped(&net, f64::from(s), &x, lo, lo + width).unwrap();
        prop_assert!(v > lo && v < lo + width);
    }

    #[test]
    fn multiplier_is_nonnegative_and_phi_joins(
        k in -5.0f64..5.0,
        lam in 0.0f64..5.0,
        mu in 0.01f64..100.0,
    ) {
        prop_assert!(multiplier_update(k, lam, mu) >= 0.0);
        let k0 = -lam / mu;
        let h = 1e-7;
        let left = penalty_phi(k0 - h, lam, mu);
        let right = penalty_phi(k0 + h, lam, mu);
        prop_assert!((left - right).abs() < 1e-5 * (1.0 + lam * lam / mu));
        prop_assert!(multiplier_update(k0 + h, lam, mu) < 1e-5 * mu.max(1.0));
    }

    #[test]
    fn bound_curves_are_ordered_cdfs(
        mu in prop::collection::vec(-2.0f64..2.0, 2..20),
        var in 0.01f64..3.0,
        points in 2usize..60,
    ) {
        let groups: Vec<u8> = (0..mu.len()).map(|i| (i % 2) as u8).collect();
        let grid = default_grid(&mu, var, points).unwrap();
        check_curves(&eqb_curves_from_diff(&groups, &mu, var, &grid).unwrap());
    }

    #[test]
    fn eqb_value_symmetric_and_zero_on_matching_groups(
        mu in prop::collection::vec(-2.0f64..2.0, 2..12),
        var in 0.05f64..2.0,
    ) {
        let groups: Vec<u8> = (0..mu.len()).map(|i| (i % 2) as u8).collect();
        let swapped: Vec<u8> = groups.iter().map(|s| 1 - s).collect();
        let grid = default_grid(&mu, var, 41).unwrap();
        let v = eqb_value(&eqb_curves_from_diff(&groups, &mu, var, &grid).unwrap()).unwrap().max();
        let w = eqb_value(&eqb_curves_from_diff(&swapped, &mu, var, &grid).unwrap()).unwrap().max();
        prop_assert!((v - w).abs() <= 1e-12);
        // Every row duplicated into both groups gives coinciding curves.
        let twice: Vec<f64> = mu.iter().flat_map(|&m| [m, m]).collect();
        let g2: Vec<u8> = (0..twice.len()).map(|i| (i % 2) as u8).collect();
        let c = eqb_curves_from_diff(&g2, &twice, var, &grid).unwrap();
        prop_assert_eq!(&c.lower[0], &c.lower[1]);
        prop_assert_eq!(eqb_value(&c).unwrap().max(), 0.0);
    }

    #[test]
    fn frechet_bounds_are_ordered(u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let b = frechet_bounds(u, v).unwrap();
        prop_assert_eq!(b.lower, (u + v - 1.0).max(0.0));
        prop_assert_eq!(b.upper, u.min(v));
        prop_assert!(b.lower <= b.upper);
    }

    #[test]
    fn clip_interval_contains_observed_range(seed in 0u64..500, n in 30usize..120) {
        let ds = dataset_from(seed, n, 2);
        let table = clip_interval(&ds, &ClipConfig::default()).unwrap();
        for (i, (lo, hi)) in table.intervals(&ds).unwrap().into_iter().enumerate() {
            let a = ds.a()[i];
            prop_assert!(lo < a && a < hi);
        }
    }

    #[test]
    fn ipw_with_identical_means_is_mean_y(seed in 0u64..500, n in 10usize..80, va in 0.01f64..2.0) {
        let ds = dataset_from(seed, n, 1);
        let mu: Vec<f64> = ds.a().iter().map(|a| a + 0.3).collect();
        let (est, _) = ipw_from_means(&ds, &mu, &mu, va, &IpwOptions::default()).unwrap();
        let mean = |rows: Vec<usize>| rows.iter().map(|&i| ds.y()[i]).sum::<f64>() / rows.len() as f64;
        prop_assert!((est.utility.overall - mean((0..n).collect())).abs() < 1e-12);
        prop_assert!((est.utility.per_group[0] - mean(ds.group_rows(0))).abs() < 1e-12);
        prop_assert!((est.utility.per_group[1] - mean(ds.group_rows(1))).abs() < 1e-12);
    }

    #[test]
    fn plugin_overall_is_count_weighted_group_mean(seed in 0u64..500, n in 10usize..80) {
        let ds = dataset_from(seed, n, 2);
        let net = structured(seed, 2);
        let actions: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let (u, _) = plugin_from_actions(&net, &ds, &actions).unwrap();
        let [n0, n1] = ds.group_counts();
        let weighted = (n0 as f64 * u.per_group[0] + n1 as f64 * u.per_group[1]) / n as f64;
        prop_assert!((u.overall - weighted).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_draws_input_rows_and_keeps_group_shares(seed in 0u64..200) {
        let ds = dataset_from(1, 300, 2);
        let m = 2000;
        let b = bootstrap(&ds, m, seed).unwrap();
        let rows: Vec<_> = ds.samples().collect();
        for r in b.samples().take(200) {
            prop_assert!(rows.contains(&r));
        }
        let p = ds.group_counts()[1] as f64 / ds.len() as f64;
        let q = b.group_counts()[1] as f64 / m as f64;
        prop_assert!((p - q).abs() <= 5.0 * (p * (1.0 - p) / m as f64).sqrt());
    }

    #[test]
    fn dataset_csv_round_trip(seed in 0u64..500, n in 2usize..40, d in 1usize..4) {
        let ds = dataset_from(seed, n, d);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), std::path::Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn lp_solutions_are_feasible(seed in 0u64..1000, eps in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na, ns, nx) = (rng.random_range(2..4), rng.random_range(2..4), rng.random_range(1..4));
        let mu: Vec<f64> = (0..na * ns * nx).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cells = ns * nx;
        let mut p = vec![1.0 / cells as f64; cells];
        p[0] = 1.0 - (cells - 1) as f64 / cells as f64;
        let pb = DiscreteProblem::new(
            (0..na).map(|a| a as f64).collect(),
            (0..ns).map(|s| s as f64).collect(),
            (0..nx).map(|x| x as f64).collect(),
            mu,
            p,
            eps,
        )
        .unwrap();
        let (inst, sol) = solve_problem(&pb).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        prop_assert!(max_violation(&inst.lp, &sol.values) <= 1e-8);
    }
}

#[test]
fn nyc_outcome_mean_matches_structural_mean() {
    for exam in [ExamRateSource::Structural, ExamRateSource::Uniform] {
        let spec = GeneratorSpec {
            seed: 17,
            n: 100_000,
            exam_rate: exam,
            ..GeneratorSpec::default()
        };
        let (ds, gt) = generate_nyc(&spec).unwrap();
        let mut analytic = 0.0;
        for i in 0..ds.len() {
            let x = ds.x().row(i).to_vec();
            analytic += counterfactual_mean_outcome(&gt, ds.s()[i], &x, ds.a()[i]).unwrap();
        }
        analytic /= ds.len() as f64;
        let sample = ds.y().iter().sum::<f64>() / ds.len() as f64;
        // Uniform exam rates add 20 * U(0,1) noise on top of the outcome noise.
        let sd = match exam {
            ExamRateSource::Structural => spec.outcome_noise_sd,
            ExamRateSource::Uniform => (spec.outcome_noise_sd.powi(2) + 400.0 / 12.0).sqrt(),
        };
        let se = sd / (ds.len() as f64).sqrt();
        assert!(
            (sample - analytic).abs() < 3.0 * se,
            "{exam:?}: sample {sample} analytic {analytic} se {se}"
        );
    }
}

#[test]
fn ipw_matches_simulated_mean_shift() {
    let spec = GeneratorSpec {
        seed: 23,
        n: 50_000,
        ..GeneratorSpec::default()
    };
    let (ds, gt) = generate_nyc(&spec).unwrap();
    let shift = 0.05;
    let va = gt.baseline_action_sd().powi(2);
    let mut base = Vec::with_capacity(ds.len());
    let mut truth = 0.0;
    for i in 0..ds.len() {
        let x = ds.x().row(i).to_vec();
        let m = gt.baseline_action_mean(ds.s()[i], &x).unwrap();
        base.push(m);
        // The outcome is affine in the action, so the mean under the shifted
        // Gaussian policy is the outcome at the shifted mean.
        truth += counterfactual_mean_outcome(&gt, ds.s()[i], &x, m + shift).unwrap();
    }
    truth /= ds.len() as f64;
    let policy: Vec<f64> = base.iter().map(|m| m + shift).collect();
    let opts = IpwOptions::default();
    let (est, _) = ipw_from_means(&ds, &policy, &base, va, &opts).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps: Vec<f64> = (0..100)
        .map(|_| {
            let rows: Vec<usize> = (0..ds.len()).map(|_| rng.random_range(0..ds.len())).collect();
            let b = ds.select(&rows).unwrap();
            let pm: Vec<f64> = rows.iter().map(|&r| policy[r]).collect();
            let bm: Vec<f64> = rows.iter().map(|&r| base[r]).collect();
            ipw_from_means(&b, &pm, &bm, va, &opts).unwrap().0.utility.overall
        })
        .collect();
    let m = reps.iter().sum::<f64>() / reps.len() as f64;
    let se = (reps.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    let got = est.utility.overall;
    assert!((got - truth).abs() < 3.0 * se, "ipw {got} truth {truth} bootstrap se {se}");
}

/// `mu_Y(a, s, x) = c a^2 + s + x_0`.
struct Quadratic {
    c: f64,
}

impl Regressor for Quadratic {
    fn input_dim(&self) -> usize {
        3
    }

    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(inputs
            .rows()
            .into_iter()
            .map(|r| self.c * r[0] * r[0] + r[1] + r[2])
            .collect())
    }

    fn mse_gradients(&self, _: ArrayView2<f64>, _: ArrayView1<f64>) -> Result<(Gradients, f64)> {
        Ok((Gradients(Vec::new()), 0.0))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }

    fn rescale_output(&mut self, _: f64, _: f64) {}
}

impl OutcomeModel for Quadratic {
    fn predict_with_action_slope(&self, inputs: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let slope = inputs.column(0).mapv(|a| 2.0 * self.c * a);
        Ok((self.predict(inputs)?, slope))
    }
}

#[test]
fn map_estimate_misses_curvature_times_half_variance() {
    let model = Quadratic { c: 0.8 };
    let base = net_init(3, &[2, 4, 1], OutputTransform::Identity).unwrap();
    let va: f64 = 0.09;
    let (s, x) = (1u8, [0.4]);
    let map = map_baseline_outcome(&model, &base, s, &x).unwrap();
    let mean_a = base.forward(&[1.0, 0.4]).unwrap()[0];
    let noise = Normal::new(0.0, va.sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let a = mean_a + noise.sample(&mut rng);
            model.c * a * a + 1.0 + 0.4
        })
        .collect();
    let m = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let curvature = 2.0 * model.c;
    let gap = m - map;
    assert!(
        (gap - curvature * va / 2.0).abs() < 3.0 * sd / (n as f64).sqrt(),
        "gap {gap} expected {}",
        curvature * va / 2.0
    );
}
