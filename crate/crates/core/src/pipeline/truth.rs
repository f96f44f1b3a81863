//! Constraint values under the generator's counterfactuals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ConstraintKind;
use crate::dataio::{counterfactual_mean_outcome, Dataset, GroundTruth};
use crate::error::contract;
use crate::stats::ks_statistic;
use crate::Result;

/// Recorded in run metadata: how paired counterfactuals share noise.
pub const TRUTH_COUPLING: &str = "shared-action-noise;shared-outcome-noise";

fn row_x(dataset: &Dataset, i: usize) -> Vec<f64> {
    dataset.x().row(i).to_vec()
}

/// Ground-truth constraint for policy mean actions `actions`.
///
/// ModBrk squares the group gap of the generator's `S x A` interaction
/// terms at the policy actions. EqB draws one action-noise value per row,
/// shared by the policy and the generator's baseline, and compares the
/// group-conditional outcome differences with a two-sample KS statistic;
/// the outcome noise is common to both arms and cancels.
pub fn ground_truth_constraint(
    gt: Option<&GroundTruth>,
    kind: ConstraintKind,
    dataset: &Dataset,
    actions: &[f64],
    seed: u64,
) -> Result<f64> {
    let gt = gt.ok_or_else(|| contract("ground truth needs generator-backed data"))?;
    if actions.len() != dataset.len() {
        return Err(contract("one action per row required"));
    }
    if dataset.d() != gt.w_x.len() {
        return Err(contract("dataset covariates do not match the generator"));
    }
    match kind {
        ConstraintKind::ModBrk => {
            let mut sums = [0.0; 2];
            let mut counts = [0usize; 2];
            for (i, &a) in actions.iter().enumerate() {
                let s = dataset.s()[i];
                sums[s as usize] += gt.moderated_component(s, &row_x(dataset, i), a)?;
                counts[s as usize] += 1;
            }
            if counts.contains(&0) {
                return Err(contract("both groups must be present"));
            }
            let gap = sums[0] / counts[0] as f64 - sums[1] / counts[1] as f64;
            Ok(gap * gap)
        }
        ConstraintKind::EqB => {
            let noise = Normal::new(0.0, gt.baseline_action_sd())
                .map_err(|e| contract(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut diffs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (i, &mu) in actions.iter().enumerate() {
                let s = dataset.s()[i];
                let x = row_x(dataset, i);
                let xi = noise.sample(&mut rng);
                let a_pol = mu + xi;
                let a_base = gt.baseline_action_mean(s, &x)? + xi;
                let d = counterfactual_mean_outcome(gt, s, &x, a_pol)?
                    - counterfactual_mean_outcome(gt, s, &x, a_base)?;
                diffs[s as usize].push(d);
            }
            if diffs.iter().any(Vec::is_empty) {
                return Err(contract("both groups must be present"));
            }
            Ok(ks_statistic(&diffs[0], &diffs[1]))
        }
    }
}
