//! Phase II: policy training against frozen phase-I models.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    ground_truth_constraint, mlp_widths, ConstraintKind, FrontierRow, Phase1Output, Phase2Config,
};
use crate::constraints::{default_grid, eqb_value_and_grad, modbrk_from_actions};
use crate::dataio::{Dataset, GroundTruth};
use crate::error::contract;
use crate::estimators::{
    clip_interval, ipw_from_means, map_baseline_outcomes, plugin_from_actions, ClipConfig,
    PolicySpec,
};
use crate::lagrangian::{schedule_step, LagrangianState, MetricsRow};
use crate::nnet::{adam_step, net_init, AdamState, OutcomeModel, OutputTransform, Regressor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Phase2Output {
    pub policy: PolicySpec,
    pub row: FrontierRow,
    pub metrics: Vec<MetricsRow>,
    /// Final mean action per row of the full dataset.
    pub actions: Vec<f64>,
}

/// Per-step evaluation: utility, d utility / d action, constraint value,
/// d constraint / d action.
struct Eval {
    utility: f64,
    d_utility: Vec<f64>,
    constraint: f64,
    d_constraint: Vec<f64>,
}

/// Shared optimizer loop. `eval` sees the rows of the current batch, the
/// batch itself and the policy's mean actions on it.
fn optimize<F>(
    policy: &mut PolicySpec,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    cfg: &Phase2Config,
    eval: F,
) -> Result<Vec<MetricsRow>>
where
    F: Fn(&[usize], &Dataset, &[f64]) -> Result<Eval>,
{
    let mut state = LagrangianState::new(vec![epsilon], &cfg.lagrangian)?;
    let mut adam = AdamState::for_params(cfg.lr, &policy.net.params_mut());
    let n = dataset.len();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let mut order: Vec<usize> = (0..n).collect();
    let per_epoch = (n / batch).max(1);
    let all: Vec<usize> = (0..n).collect();
    let mut metrics = Vec::new();
    let mut trace = Vec::new();

    for step in 0..cfg.steps {
        let (rows, sub) = if batch == n {
            (all.clone(), None)
        } else {
            if step % per_epoch == 0 {
                order.shuffle(&mut rng);
            }
            let k = step % per_epoch;
            let mut rows = order[k * batch..(k + 1) * batch].to_vec();
            rows.sort_unstable();
            let sub = dataset.select(&rows)?;
            (rows, Some(sub))
        };
        let view = sub.as_ref().unwrap_or(dataset);
        if view.group_counts().contains(&0) {
            continue;
        }
        let actions = policy.mean_actions(view)?;
        let e = eval(&rows, view, &actions)?;
        let (pen, slopes) = state.penalty_and_slopes(&[e.constraint])?;
        let loss = -e.utility + pen;
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: step,
                loss,
                trace,
            });
        }
        let d_actions: Vec<f64> = e
            .d_utility
            .iter()
            .zip(&e.d_constraint)
            .map(|(du, dc)| -du + slopes[0] * dc)
            .collect();
        let grads = policy.param_gradient(view, &d_actions)?;
        adam_step(&mut policy.net.params_mut(), &grads.slices(), &mut adam)?;

        if (step + 1) % state.update_period == 0 {
            let full_actions = policy.mean_actions(dataset)?;
            let full = eval(&all, dataset, &full_actions)?;
            schedule_step(&mut state, &[full.constraint])?;
            let row = MetricsRow {
                step: step + 1,
                lambda: state.lambdas[0],
                penalty_mu: state.penalty_mu,
                violation: full.constraint - epsilon,
            };
            debug!(
                "step {} utility {:.4} constraint {:.6} lambda {:.4}",
                row.step, full.utility, full.constraint, row.lambda
            );
            metrics.push(row);
        }
    }
    Ok(metrics)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: ConstraintKind,
    policy: PolicySpec,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    metrics: Vec<MetricsRow>,
    utility: crate::estimators::Utility,
    constraint: f64,
    actions: Vec<f64>,
    gt: Option<&GroundTruth>,
) -> Result<Phase2Output> {
    let constraint_true = match gt {
        Some(_) => Some(ground_truth_constraint(gt, kind, dataset, &actions, seed)?),
        None => None,
    };
    Ok(Phase2Output {
        policy,
        row: FrontierRow {
            epsilon,
            seed,
            utility: utility.overall,
            utility_s0: utility.per_group[0],
            utility_s1: utility.per_group[1],
            constraint: constraint.max(0.0),
            constraint_true,
        },
        metrics,
        actions,
    })
}

/// Trains a clipped deterministic policy for moderation breaking.
pub fn phase2_modbrk(
    p1: &Phase1Output,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    cfg: &Phase2Config,
    drop_s: bool,
    gt: Option<&GroundTruth>,
) -> Result<Phase2Output> {
    cfg.validate()?;
    let outcome = p1.structured()?;
    let clip_cfg = ClipConfig {
        use_s: cfg.clip.use_s && !drop_s,
        ..cfg.clip
    };
    let clip = clip_interval(dataset, &clip_cfg)?;
    let net = net_init(
        seed,
        &mlp_widths(dataset.d() + 1, cfg.hidden, cfg.depth),
        OutputTransform::Identity,
    )?;
    let mut policy = PolicySpec::deterministic(net, Some(clip))?.with_drop_s(drop_s);
    let eval = |_: &[usize], view: &Dataset, actions: &[f64]| -> Result<Eval> {
        let (u, du) = plugin_from_actions(outcome, view, actions)?;
        let (c, dc) = modbrk_from_actions(outcome, view, actions)?;
        Ok(Eval {
            utility: u.overall,
            d_utility: du,
            constraint: c,
            d_constraint: dc,
        })
    };
    let metrics = optimize(&mut policy, dataset, epsilon, seed, cfg, eval)?;
    let actions = policy.mean_actions(dataset)?;
    let (u, _) = plugin_from_actions(outcome, dataset, &actions)?;
    let (c, _) = modbrk_from_actions(outcome, dataset, &actions)?;
    finish(ConstraintKind::ModBrk, policy, dataset, epsilon, seed, metrics, u, c, actions, gt)
}

/// Trains a gaussian-mean policy for equal benefit, starting from a copy
/// of the baseline net.
pub fn phase2_eqb(
    p1: &Phase1Output,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    cfg: &Phase2Config,
    drop_s: bool,
    gt: Option<&GroundTruth>,
) -> Result<Phase2Output> {
    cfg.validate()?;
    let (Some(base_net), Some(var)) = (&p1.baseline, &p1.variances) else {
        return Err(contract("equal benefit needs the baseline net and variances"));
    };
    let outcome = &p1.outcome;
    let mu_base: Vec<f64> = base_net
        .forward_batch(dataset.policy_inputs(false).view())?
        .column(0)
        .to_vec();
    let muy_base = map_baseline_outcomes(outcome, base_net, dataset)?;
    let grid = default_grid(&[0.0], var.vy, cfg.grid_points)?;
    let mut policy = PolicySpec::gaussian(base_net.clone(), var.va)?.with_drop_s(drop_s);

    let evaluate = |rows: &[usize], view: &Dataset, actions: &[f64]| -> Result<Eval> {
        let mb: Vec<f64> = rows.iter().map(|&i| mu_base[i]).collect();
        let (est, du) = ipw_from_means(view, actions, &mb, var.va, &cfg.ipw)?;
        let (muy, slope) = outcome.predict_with_action_slope(view.outcome_inputs(actions)?.view())?;
        let diff: Vec<f64> = rows.iter().zip(muy.iter()).map(|(&i, m)| m - muy_base[i]).collect();
        let (c, dc_ddiff) = eqb_value_and_grad(view.s(), &diff, var.vy, &grid)?;
        let dc = dc_ddiff.iter().zip(slope.iter()).map(|(g, s)| g * s).collect();
        Ok(Eval {
            utility: est.utility.overall,
            d_utility: du,
            constraint: c,
            d_constraint: dc,
        })
    };
    let metrics = optimize(&mut policy, dataset, epsilon, seed, cfg, evaluate)?;
    let actions = policy.mean_actions(dataset)?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (est, _) = ipw_from_means(dataset, &actions, &mu_base, var.va, &cfg.ipw)?;
    let c = evaluate(&all, dataset, &actions)?.constraint;
    finish(ConstraintKind::EqB, policy, dataset, epsilon, seed, metrics, est.utility, c, actions, gt)
}
