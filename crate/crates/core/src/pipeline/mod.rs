//! Two-phase training, baselines, slack sweeps and ground-truth scoring.
//!
//! Phase I fits the nuisance models once per dataset: the structured
//! outcome net for moderation breaking, or a plain outcome net plus the
//! baseline action net and both residual variances for equal benefit.
//! Phase II trains a fresh policy per `(epsilon, seed)` against the frozen
//! phase-I models with the augmented Lagrangian.

mod phase2;
mod store;
mod sweep;
mod truth;

pub use phase2::{phase2_eqb, phase2_modbrk, Phase2Output};
pub use sweep::{
    action_histogram, read_frontier, run_baselines, slack_sweep, write_baselines,
    write_failures, write_frontier, write_histogram, BaselineResult, FrontierRow, HistogramRow,
    RunRecord, SweepResult, FRONTIER_HEADER, HISTOGRAM_BINS, summarize, FrontierSummary,
};
pub use store::{load_phase1, save_phase1};
pub use truth::{ground_truth_constraint, TRUTH_COUPLING};

use std::path::PathBuf;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::dataio::{
    bundled_standin, generate_ihdp_surrogate, generate_nyc, load_dataset, split_rows, Dataset,
    GeneratorSpec, GroundTruth,
};
use crate::error::contract;
use crate::estimators::{
    estimate_variances, ClipConfig, IpwOptions, VarianceEstimates, DEFAULT_IPW_CLAMP,
};
use crate::lagrangian::LagrangianConfig;
use crate::nnet::{
    fit_regression, net_init, AffineNet, Anchor, Gradients, OutcomeModel, OutputTransform,
    Regressor, StructuredOutcomeNet, TrainConfig,
};
use crate::stats::r_squared;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    ModBrk,
    EqB,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::ModBrk => "modbrk",
            ConstraintKind::EqB => "eqb",
        }
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modbrk" => Ok(Self::ModBrk),
            "eqb" => Ok(Self::EqB),
            other => Err(crate::Error::Config(format!(
                "unknown constraint `{other}` (expected modbrk or eqb)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase1Config {
    /// Fraction of rows held out to score the outcome model.
    pub holdout: f64,
    pub outcome: TrainConfig,
    pub baseline: TrainConfig,
    /// Hidden layers per structured subnet.
    pub structured_depth: usize,
    /// Weight of the `g`-anchoring regularizer; 0 disables it.
    pub anchor_weight: f64,
}

impl Phase1Config {
    /// Reduced settings that keep a full sweep within minutes on one core.
    pub fn desk(kind: ConstraintKind) -> Self {
        let base = TrainConfig {
            epochs: 300,
            lr: 0.01,
            hidden: 32,
            batch_size: None,
            seed: 0,
        };
        Self {
            holdout: 0.1,
            outcome: match kind {
                ConstraintKind::ModBrk => TrainConfig { lr: 0.005, ..base.clone() },
                ConstraintKind::EqB => TrainConfig { epochs: 200, ..base.clone() },
            },
            baseline: TrainConfig { epochs: 200, ..base },
            structured_depth: 2,
            anchor_weight: 0.0,
        }
    }

    /// The published settings.
    pub fn faithful(kind: ConstraintKind) -> Self {
        match kind {
            ConstraintKind::ModBrk => Self {
                outcome: TrainConfig {
                    epochs: 3000,
                    lr: 0.005,
                    hidden: 256,
                    batch_size: None,
                    seed: 0,
                },
                ..Self::desk(kind)
            },
            ConstraintKind::EqB => Self {
                outcome: TrainConfig {
                    epochs: 500,
                    lr: 0.01,
                    hidden: 128,
                    batch_size: None,
                    seed: 0,
                },
                baseline: TrainConfig {
                    epochs: 1000,
                    lr: 1e-4,
                    hidden: 128,
                    batch_size: None,
                    seed: 0,
                },
                ..Self::desk(kind)
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase2Config {
    /// Optimizer steps.
    pub steps: usize,
    pub lr: f64,
    /// Hidden width of a freshly built policy net (moderation breaking).
    pub hidden: usize,
    /// Hidden layers of a freshly built policy net.
    pub depth: usize,
    /// Rows per step; `None` uses every row.
    pub batch_size: Option<usize>,
    pub lagrangian: LagrangianConfig,
    pub clip: ClipConfig,
    pub grid_points: usize,
    pub ipw: IpwOptions,
}

impl Phase2Config {
    pub fn desk(kind: ConstraintKind) -> Self {
        Self {
            steps: match kind {
                ConstraintKind::ModBrk => 800,
                ConstraintKind::EqB => 400,
            },
            lr: match kind {
                ConstraintKind::ModBrk => 0.005,
                ConstraintKind::EqB => 0.001,
            },
            hidden: 32,
            depth: 2,
            batch_size: Some(2048),
            lagrangian: LagrangianConfig::default(),
            clip: ClipConfig::default(),
            grid_points: crate::constraints::DEFAULT_GRID_POINTS,
            // Unclamped weights explode once the policy mean drifts a few
            // baseline standard deviations on a handful of rows.
            ipw: match kind {
                ConstraintKind::ModBrk => IpwOptions::default(),
                ConstraintKind::EqB => IpwOptions {
                    clamp: Some(DEFAULT_IPW_CLAMP),
                    ..IpwOptions::default()
                },
            },
        }
    }

    pub fn faithful(kind: ConstraintKind) -> Self {
        Self {
            steps: match kind {
                ConstraintKind::ModBrk => 3000,
                ConstraintKind::EqB => 1000,
            },
            lr: match kind {
                ConstraintKind::ModBrk => 0.001,
                ConstraintKind::EqB => 0.01,
            },
            hidden: 64,
            batch_size: None,
            ..Self::desk(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.lr > 0.0) || self.hidden == 0 {
            return Err(contract("phase II needs steps >= 1, lr > 0, hidden >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(contract("batch size must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(contract("grid needs at least 2 points"));
        }
        Ok(())
    }
}

/// Which slack values a sweep visits.
#[derive(Clone, Debug, PartialEq)]
pub enum EpsilonGrid {
    List(Vec<f64>),
    /// `0`, then `count - 2` values evenly spaced inside `(0, c_unc)` where
    /// `c_unc` is the constraint reached without a constraint, then
    /// infinity.
    Auto { count: usize },
}

/// Where the observational data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Nyc(GeneratorSpec),
    /// Surrogate generator fit to a source CSV; `None` uses the bundled
    /// stand-in.
    Ihdp {
        spec: GeneratorSpec,
        source: Option<PathBuf>,
    },
    File(PathBuf),
}

impl DataSource {
    pub fn load(&self) -> Result<(Dataset, Option<GroundTruth>)> {
        match self {
            DataSource::Nyc(spec) => {
                let (ds, gt) = generate_nyc(spec)?;
                Ok((ds, Some(gt)))
            }
            DataSource::Ihdp { spec, source } => {
                let src = match source {
                    Some(p) => load_dataset(p)?,
                    None => bundled_standin()?,
                };
                Ok((generate_ihdp_surrogate(spec, &src)?, None))
            }
            DataSource::File(p) => Ok((load_dataset(p)?, None)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ConstraintKind,
    pub epsilons: EpsilonGrid,
    pub seeds: Vec<u64>,
    pub source: DataSource,
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    pub const_levels: Vec<f64>,
    /// Worker threads for independent phase-II runs.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn desk(kind: ConstraintKind, source: DataSource) -> Self {
        Self {
            kind,
            epsilons: EpsilonGrid::Auto { count: 5 },
            seeds: vec![0, 1, 2],
            source,
            phase1: Phase1Config::desk(kind),
            phase2: Phase2Config::desk(kind),
            const_levels: vec![0.25, 0.5, 0.75],
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(contract("at least one seed required"));
        }
        match &self.epsilons {
            EpsilonGrid::List(v) if v.is_empty() || v.iter().any(|e| !(*e >= 0.0)) => {
                return Err(contract("epsilon values must be >= 0 and nonempty"));
            }
            EpsilonGrid::Auto { count } if *count < 2 => {
                return Err(contract("automatic epsilon grid needs at least 2 values"));
            }
            _ => {}
        }
        self.phase1.outcome.validate()?;
        self.phase1.baseline.validate()?;
        self.phase2.validate()
    }
}

/// Outcome model fit in phase I.
#[derive(Clone, Debug, PartialEq)]
pub enum OutcomeNet {
    Structured(StructuredOutcomeNet),
    Plain(AffineNet),
}

impl Regressor for OutcomeNet {
    fn input_dim(&self) -> usize {
        match self {
            OutcomeNet::Structured(n) => n.input_dim(),
            OutcomeNet::Plain(n) => n.input_dim(),
        }
    }

    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            OutcomeNet::Structured(n) => n.predict(inputs),
            OutcomeNet::Plain(n) => n.predict(inputs),
        }
    }

    fn mse_gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(Gradients, f64)> {
        match self {
            OutcomeNet::Structured(n) => n.mse_gradients(inputs, targets),
            OutcomeNet::Plain(n) => n.mse_gradients(inputs, targets),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            OutcomeNet::Structured(n) => n.params_mut(),
            OutcomeNet::Plain(n) => n.params_mut(),
        }
    }

    fn rescale_output(&mut self, scale: f64, shift: f64) {
        match self {
            OutcomeNet::Structured(n) => n.rescale_output(scale, shift),
            OutcomeNet::Plain(n) => n.rescale_output(scale, shift),
        }
    }
}

impl OutcomeModel for OutcomeNet {
    fn predict_with_action_slope(
        &self,
        inputs: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        match self {
            OutcomeNet::Structured(n) => n.predict_with_action_slope(inputs),
            OutcomeNet::Plain(n) => n.predict_with_action_slope(inputs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase1Output {
    pub kind: ConstraintKind,
    pub outcome: OutcomeNet,
    /// Baseline action-mean net (equal benefit only).
    pub baseline: Option<AffineNet>,
    pub variances: Option<VarianceEstimates>,
    pub outcome_trace: Vec<f64>,
    pub baseline_trace: Vec<f64>,
    /// Outcome-model R² on the held-out rows.
    pub holdout_r2: f64,
}

impl Phase1Output {
    pub fn structured(&self) -> Result<&StructuredOutcomeNet> {
        match &self.outcome {
            OutcomeNet::Structured(n) => Ok(n),
            OutcomeNet::Plain(_) => Err(contract("moderation breaking needs a structured outcome net")),
        }
    }
}

fn mlp_widths(input: usize, hidden: usize, depth: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend(std::iter::repeat_n(hidden, depth));
    w.push(1);
    w
}

fn residuals(pred: &Array1<f64>, target: &[f64]) -> Vec<f64> {
    pred.iter().zip(target).map(|(p, t)| t - p).collect()
}

/// Fits the phase-I models on the non-held-out rows.
pub fn phase1_train(dataset: &Dataset, kind: ConstraintKind, cfg: &Phase1Config) -> Result<Phase1Output> {
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(contract("holdout fraction must lie in [0, 1)"));
    }
    let (mut train, mut test) = split_rows(dataset.len(), cfg.holdout, cfg.outcome.seed);
    if test.is_empty() {
        test = train.clone();
    }
    train.sort_unstable();
    test.sort_unstable();
    let tr = dataset.select(&train)?;
    let te = dataset.select(&test)?;
    let d = dataset.d();
    let oc = &cfg.outcome;
    let x_tr = tr.outcome_inputs(tr.a())?;
    let y_tr = ArrayView1::from(tr.y());
    let (outcome, outcome_trace) = match kind {
        ConstraintKind::ModBrk => {
            let sub = |seed_off: u64, input: usize| {
                net_init(
                    oc.seed.wrapping_add(seed_off),
                    &mlp_widths(input, oc.hidden, cfg.structured_depth),
                    OutputTransform::Identity,
                )
            };
            let mut net = StructuredOutcomeNet::new(sub(0, d + 1)?, sub(1, d + 2)?, sub(2, d + 1)?)?;
            if cfg.anchor_weight > 0.0 {
                let mean_a = tr.a().iter().sum::<f64>() / tr.len() as f64;
                net.anchor = Some(Anchor {
                    action: mean_a,
                    weight: cfg.anchor_weight,
                });
            }
            let (net, trace) = fit_regression(net, x_tr.view(), y_tr, oc)?;
            (OutcomeNet::Structured(net), trace)
        }
        ConstraintKind::EqB => {
            let net = net_init(oc.seed, &[d + 2, oc.hidden, 1], OutputTransform::Identity)?;
            let (net, trace) = fit_regression(net, x_tr.view(), y_tr, oc)?;
            (OutcomeNet::Plain(net), trace)
        }
    };
    let pred_te = outcome.predict(te.outcome_inputs(te.a())?.view())?;
    let holdout_r2 = r_squared(pred_te.as_slice().expect("contiguous"), te.y());

    let (baseline, variances, baseline_trace) = match kind {
        ConstraintKind::ModBrk => (None, None, Vec::new()),
        ConstraintKind::EqB => {
            let bc = &cfg.baseline;
            let net = net_init(bc.seed.wrapping_add(7), &[d + 1, bc.hidden, 1], OutputTransform::Identity)?;
            let p_tr = tr.policy_inputs(false);
            let (net, trace) = fit_regression(net, p_tr.view(), ArrayView1::from(tr.a()), bc)?;
            let a_res = residuals(&net.predict(p_tr.view())?, tr.a());
            let y_res = residuals(&outcome.predict(x_tr.view())?, tr.y());
            (Some(net), Some(estimate_variances(&a_res, &y_res)?), trace)
        }
    };
    Ok(Phase1Output {
        kind,
        outcome,
        baseline,
        variances,
        outcome_trace,
        baseline_trace,
        holdout_r2,
    })
}

/// SHA-256 of the serialized outcome net; used to check that phase II
/// leaves phase-I parameters untouched.
pub fn fingerprint(net: &OutcomeNet) -> String {
    use sha2::{Digest, Sha256};
    let text = match net {
        OutcomeNet::Structured(n) => crate::nnet::write_structured(n),
        OutcomeNet::Plain(n) => crate::nnet::write_affine(n),
    };
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
