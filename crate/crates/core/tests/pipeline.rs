//! End-to-end pipeline behaviour on small generated datasets.

use fairpol::constraints::modbrk_from_actions;
use fairpol::dataio::{generate_nyc, Dataset, GeneratorSpec, GroundTruth};
use fairpol::estimators::{clip_interval, plugin_from_actions};
use fairpol::pipeline::{
    fingerprint, ground_truth_constraint, load_phase1, phase1_train, phase2_eqb, phase2_modbrk,
    read_frontier, run_baselines, save_phase1, slack_sweep, write_frontier, ConstraintKind,
    DataSource, EpsilonGrid, ExperimentConfig, Phase1Config, Phase1Output, Phase2Config,
};
use fairpol::stats::ks_critical_95;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn small_spec(seed: u64, n: usize) -> GeneratorSpec {
    GeneratorSpec {
        seed,
        n,
        ..GeneratorSpec::default()
    }
}

fn quick_phase1(kind: ConstraintKind) -> Phase1Config {
    let mut c = Phase1Config::desk(kind);
    c.outcome.epochs = 60;
    c.baseline.epochs = 60;
    c
}

fn quick_phase2(kind: ConstraintKind) -> Phase2Config {
    let mut c = Phase2Config::desk(kind);
    c.steps = 100;
    c.batch_size = Some(256);
    c
}

fn setup(kind: ConstraintKind, n: usize) -> (Dataset, GroundTruth, Phase1Output) {
    let (ds, gt) = generate_nyc(&small_spec(4, n)).unwrap();
    let p1 = phase1_train(&ds, kind, &quick_phase1(kind)).unwrap();
    (ds, gt, p1)
}

#[test]
fn phase_two_leaves_phase_one_untouched() {
    for kind in [ConstraintKind::ModBrk, ConstraintKind::EqB] {
        let (ds, gt, p1) = setup(kind, 1500);
        let before = fingerprint(&p1.outcome);
        let cfg = quick_phase2(kind);
        match kind {
            ConstraintKind::ModBrk => {
                phase2_modbrk(&p1, &ds, 0.0, 1, &cfg, false, Some(&gt)).unwrap();
            }
            ConstraintKind::EqB => {
                phase2_eqb(&p1, &ds, 0.0, 1, &cfg, false, Some(&gt)).unwrap();
            }
        }
        assert_eq!(fingerprint(&p1.outcome), before);
    }
}

#[test]
fn same_seed_same_models_and_rows() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 1200);
    let again = phase1_train(&ds, ConstraintKind::ModBrk, &quick_phase1(ConstraintKind::ModBrk)).unwrap();
    assert_eq!(fingerprint(&p1.outcome), fingerprint(&again.outcome));
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let a = phase2_modbrk(&p1, &ds, 0.1, 7, &cfg, false, None).unwrap();
    let b = phase2_modbrk(&p1, &ds, 0.1, 7, &cfg, false, None).unwrap();
    assert_eq!(a.row, b.row);
    assert_eq!(a.actions, b.actions);
}

#[test]
fn modbrk_actions_respect_clip_intervals() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 1200);
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let out = phase2_modbrk(&p1, &ds, f64::INFINITY, 2, &cfg, false, None).unwrap();
    let table = clip_interval(&ds, &cfg.clip).unwrap();
    for (a, (lo, hi)) in out.actions.iter().zip(table.intervals(&ds).unwrap()) {
        assert!(lo < *a && *a < hi);
    }
}

#[test]
fn sweep_counts_rows_and_fills_truth() {
    let (ds, gt, p1) = setup(ConstraintKind::ModBrk, 1200);
    let mut cfg = ExperimentConfig::desk(ConstraintKind::ModBrk, DataSource::Nyc(small_spec(4, 1200)));
    cfg.epsilons = EpsilonGrid::List(vec![f64::INFINITY, 0.5, 0.0, 0.05, 0.2]);
    cfg.phase2 = quick_phase2(ConstraintKind::ModBrk);
    cfg.phase2.steps = 40;
    let res = slack_sweep(&cfg, &ds, &p1, Some(&gt)).unwrap();
    let rows = res.rows();
    assert_eq!(rows.len(), 15);
    assert!(res.failures.is_empty());
    assert!(rows.windows(2).all(|w| w[0].epsilon <= w[1].epsilon));
    assert!(rows.iter().all(|r| r.constraint_true.is_some() && r.constraint >= 0.0));

    let mut buf = Vec::new();
    write_frontier(&rows, &mut buf).unwrap();
    assert!(buf.starts_with(b"epsilon,seed,utility,utility_s0,utility_s1,constraint,constraint_true\n"));
    assert_eq!(read_frontier(buf.as_slice(), "mem").unwrap(), rows);

    let no_truth = slack_sweep(&cfg, &ds, &p1, None).unwrap();
    assert!(no_truth.rows().iter().all(|r| r.constraint_true.is_none()));
}

#[test]
fn baselines_match_direct_plugin_values() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 1200);
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let rows = run_baselines(ConstraintKind::ModBrk, &ds, &p1, &cfg, &[0.2, 0.7], 0, None).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(
        names,
        ["unconstrained", "drop_s", "const_a(0.2)", "const_a(0.7)", "baseline_policy"]
    );
    let outcome = p1.structured().unwrap();
    for (row, level) in rows[2..4].iter().zip([0.2, 0.7]) {
        let (u, _) = plugin_from_actions(outcome, &ds, &vec![level; ds.len()]).unwrap();
        assert_eq!(row.utility, u.overall);
    }
    let (u, _) = plugin_from_actions(outcome, &ds, ds.a()).unwrap();
    let direct: f64 = {
        let preds = fairpol::nnet::Regressor::predict(outcome, ds.outcome_inputs(ds.a()).unwrap().view()).unwrap();
        preds.sum() / ds.len() as f64
    };
    assert_eq!(rows[4].utility, u.overall);
    assert!((rows[4].utility - direct).abs() < 1e-12);
}

#[test]
fn drop_s_policy_ignores_group() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 1200);
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let out = phase2_modbrk(&p1, &ds, f64::INFINITY, 3, &cfg, true, None).unwrap();
    let flipped = Dataset::from_columns(
        ds.s().iter().map(|s| 1 - s).collect(),
        ds.x().to_owned(),
        ds.a().to_vec(),
        ds.y().to_vec(),
    )
    .unwrap();
    assert_eq!(
        out.policy.mean_actions(&ds).unwrap(),
        out.policy.mean_actions(&flipped).unwrap()
    );
}

#[test]
fn unconstrained_sweep_point_equals_unconstrained_baseline() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 1200);
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let run = phase2_modbrk(&p1, &ds, f64::INFINITY, 0, &cfg, false, None).unwrap();
    let base = run_baselines(ConstraintKind::ModBrk, &ds, &p1, &cfg, &[], 0, None).unwrap();
    assert!((run.row.utility - base[0].utility).abs() <= 0.01 * base[0].utility.abs());
}

#[test]
fn eqb_clone_starts_feasible_at_mean_outcome() {
    let (ds, _, p1) = setup(ConstraintKind::EqB, 1500);
    let mut cfg = quick_phase2(ConstraintKind::EqB);
    cfg.steps = 1;
    cfg.lr = 1e-12;
    cfg.batch_size = None;
    let out = phase2_eqb(&p1, &ds, 0.0, 0, &cfg, false, None).unwrap();
    // Unit weights on every row the density floor keeps.
    let base = p1.baseline.as_ref().unwrap();
    let va = p1.variances.unwrap().va;
    let mu = base.forward_batch(ds.policy_inputs(false).view()).unwrap();
    let log_floor = 1e-12f64.ln();
    let kept: Vec<f64> = (0..ds.len())
        .filter(|&i| {
            let r = ds.a()[i] - mu[[i, 0]];
            -0.5 * r * r / va - 0.5 * (2.0 * std::f64::consts::PI * va).ln() >= log_floor
        })
        .map(|i| ds.y()[i])
        .collect();
    let mean_y = kept.iter().sum::<f64>() / kept.len() as f64;
    assert!(out.row.constraint < 1e-12, "constraint {}", out.row.constraint);
    assert!((out.row.utility - mean_y).abs() < 1e-6 * mean_y.abs(), "{} vs {mean_y}", out.row.utility);
}

#[test]
fn eqb_truth_is_zero_for_the_generator_baseline() {
    let (ds, gt) = generate_nyc(&small_spec(8, 3000)).unwrap();
    let base: Vec<f64> = (0..ds.len())
        .map(|i| gt.baseline_action_mean(ds.s()[i], &ds.x().row(i).to_vec()).unwrap())
        .collect();
    let ks = ground_truth_constraint(Some(&gt), ConstraintKind::EqB, &ds, &base, 1).unwrap();
    let [n0, n1] = ds.group_counts();
    assert!(ks < ks_critical_95(n0, n1), "ks {ks}");
    assert!(ground_truth_constraint(None, ConstraintKind::EqB, &ds, &base, 1).is_err());
}

#[test]
fn modbrk_truth_vanishes_without_interactions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut beta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..2.0)).collect();
    for b in &mut beta[11..] {
        *b = 0.0;
    }
    let spec = GeneratorSpec {
        beta: Some(beta),
        ..small_spec(12, 2000)
    };
    let (ds, gt) = generate_nyc(&spec).unwrap();
    for _ in 0..5 {
        let actions: Vec<f64> = (0..ds.len()).map(|_| rng.random_range(-0.5..1.5)).collect();
        let v = ground_truth_constraint(Some(&gt), ConstraintKind::ModBrk, &ds, &actions, 0).unwrap();
        assert_eq!(v, 0.0);
    }
}

/// `y = 1 + 2a - s + x . w + noise` with unit-variance noise.
fn linear_dataset(n: usize, noise_sd: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let noise = Normal::new(0.0, noise_sd).unwrap();
    let s: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let a: Vec<f64> = (0..n)
        .map(|i| 0.5 + 0.3 * x[[i, 0]] - 0.2 * f64::from(s[i]) + 0.1 * noise.sample(&mut rng))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            1.0 + 2.0 * a[i] - f64::from(s[i]) + 1.5 * x[[i, 0]] - 0.5 * x[[i, 1]]
                + noise.sample(&mut rng)
        })
        .collect();
    Dataset::from_columns(s, x, a, y).unwrap()
}

#[test]
fn phase_one_fits_a_linear_generator() {
    let noise_free = linear_dataset(3000, 1e-3);
    let p1 = phase1_train(&noise_free, ConstraintKind::EqB, &Phase1Config::desk(ConstraintKind::EqB)).unwrap();
    assert!(p1.holdout_r2 > 0.9, "holdout r2 {}", p1.holdout_r2);

    let noisy = linear_dataset(6000, 1.0);
    let p1 = phase1_train(&noisy, ConstraintKind::EqB, &Phase1Config::desk(ConstraintKind::EqB)).unwrap();
    let vy = p1.variances.unwrap().vy;
    assert!((vy - 1.0).abs() < 0.1, "vy {vy}");
}

#[test]
fn nyc_outcome_model_generalizes() {
    let (ds, _) = generate_nyc(&small_spec(5, 4000)).unwrap();
    let p1 = phase1_train(&ds, ConstraintKind::ModBrk, &Phase1Config::desk(ConstraintKind::ModBrk)).unwrap();
    assert!(p1.holdout_r2 > 0.5, "holdout r2 {}", p1.holdout_r2);
}

#[test]
fn phase_one_store_round_trips() {
    for kind in [ConstraintKind::ModBrk, ConstraintKind::EqB] {
        let (_, _, p1) = setup(kind, 800);
        let dir = tempfile::tempdir().unwrap();
        save_phase1(&p1, dir.path()).unwrap();
        let back = load_phase1(dir.path()).unwrap();
        assert_eq!(back.kind, kind);
        assert_eq!(fingerprint(&back.outcome), fingerprint(&p1.outcome));
        assert_eq!(back.variances, p1.variances);
        assert_eq!(back.outcome_trace, p1.outcome_trace);
    }
}

#[test]
fn eps_zero_does_not_exceed_unconstrained_constraint() {
    let (ds, _, p1) = setup(ConstraintKind::ModBrk, 2000);
    let cfg = quick_phase2(ConstraintKind::ModBrk);
    let tight = phase2_modbrk(&p1, &ds, 0.0, 0, &cfg, false, None).unwrap();
    let loose = phase2_modbrk(&p1, &ds, f64::INFINITY, 0, &cfg, false, None).unwrap();
    assert!(tight.row.constraint <= loose.row.constraint);
    let outcome = p1.structured().unwrap();
    let (c, _) = modbrk_from_actions(outcome, &ds, &tight.actions).unwrap();
    assert_eq!(c.max(0.0), tight.row.constraint);
}
