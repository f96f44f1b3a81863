//! Baselines, slack sweeps and their CSV outputs.

use std::io::{Read, Write};

use log::{info, warn};
use rayon::prelude::*;

use super::{
    ground_truth_constraint, phase2_eqb, phase2_modbrk, ConstraintKind, EpsilonGrid,
    ExperimentConfig, Phase1Output, Phase2Config, Phase2Output,
};
use crate::constraints::modbrk_from_actions;
use crate::dataio::{Dataset, GroundTruth};
use crate::error::contract;
use crate::estimators::{ipw_from_means, plugin_from_actions};
use crate::lagrangian::MetricsRow;
use crate::{Error, Result};

/// One point of the utility/constraint frontier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierRow {
    pub epsilon: f64,
    pub seed: u64,
    pub utility: f64,
    pub utility_s0: f64,
    pub utility_s1: f64,
    pub constraint: f64,
    /// Only for generator-backed data.
    pub constraint_true: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult {
    /// `unconstrained`, `drop_s`, `const_a(<level>)` or `baseline_policy`.
    pub name: String,
    pub utility: f64,
    pub utility_s0: f64,
    pub utility_s1: f64,
    pub constraint: f64,
    pub constraint_true: Option<f64>,
}

impl BaselineResult {
    fn from_row(name: impl Into<String>, r: &FrontierRow) -> Self {
        Self {
            name: name.into(),
            utility: r.utility,
            utility_s0: r.utility_s0,
            utility_s1: r.utility_s1,
            constraint: r.constraint,
            constraint_true: r.constraint_true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count_s0: usize,
    pub count_s1: usize,
}

/// Everything a single `(epsilon, seed)` run leaves behind.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub row: FrontierRow,
    pub metrics: Vec<MetricsRow>,
    pub histogram: Vec<HistogramRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// Slack values actually visited, ascending.
    pub epsilons: Vec<f64>,
    /// Successful runs sorted by `(epsilon, seed)`.
    pub runs: Vec<RunRecord>,
    /// `(epsilon, seed, message)` for runs that failed.
    pub failures: Vec<(f64, u64, String)>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<FrontierRow> {
        self.runs.iter().map(|r| r.row).collect()
    }
}

pub const HISTOGRAM_BINS: usize = 20;

/// Per-group counts of `actions` in equal-width bins over their range.
pub fn action_histogram(dataset: &Dataset, actions: &[f64], bins: usize) -> Result<Vec<HistogramRow>> {
    if actions.len() != dataset.len() || bins == 0 {
        return Err(contract("histogram needs one action per row and at least one bin"));
    }
    let lo = actions.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = actions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut rows: Vec<HistogramRow> = (0..bins)
        .map(|k| HistogramRow {
            bin_lo: lo + width * k as f64,
            bin_hi: if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 },
            count_s0: 0,
            count_s1: 0,
        })
        .collect();
    for (&a, &s) in actions.iter().zip(dataset.s()) {
        let k = (((a - lo) / width) as usize).min(bins - 1);
        if s == 0 {
            rows[k].count_s0 += 1;
        } else {
            rows[k].count_s1 += 1;
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    kind: ConstraintKind,
    p1: &Phase1Output,
    dataset: &Dataset,
    epsilon: f64,
    seed: u64,
    cfg: &Phase2Config,
    drop_s: bool,
    gt: Option<&GroundTruth>,
) -> Result<Phase2Output> {
    match kind {
        ConstraintKind::ModBrk => phase2_modbrk(p1, dataset, epsilon, seed, cfg, drop_s, gt),
        ConstraintKind::EqB => phase2_eqb(p1, dataset, epsilon, seed, cfg, drop_s, gt),
    }
}

/// Unconstrained and `drop_s` runs, constant actions (moderation breaking
/// only) and the observed-action baseline.
pub fn run_baselines(
    kind: ConstraintKind,
    dataset: &Dataset,
    p1: &Phase1Output,
    cfg: &Phase2Config,
    const_levels: &[f64],
    seed: u64,
    gt: Option<&GroundTruth>,
) -> Result<Vec<BaselineResult>> {
    let mut out = Vec::new();
    let unc = run_one(kind, p1, dataset, f64::INFINITY, seed, cfg, false, gt)?;
    out.push(BaselineResult::from_row("unconstrained", &unc.row));
    let drop = run_one(kind, p1, dataset, f64::INFINITY, seed, cfg, true, gt)?;
    out.push(BaselineResult::from_row("drop_s", &drop.row));
    let truth = |actions: &[f64]| -> Result<Option<f64>> {
        gt.map(|_| ground_truth_constraint(gt, kind, dataset, actions, seed))
            .transpose()
    };
    match kind {
        ConstraintKind::ModBrk => {
            let outcome = p1.structured()?;
            for &level in const_levels {
                let actions = vec![level; dataset.len()];
                let (u, _) = plugin_from_actions(outcome, dataset, &actions)?;
                let (c, _) = modbrk_from_actions(outcome, dataset, &actions)?;
                out.push(BaselineResult {
                    name: format!("const_a({level})"),
                    utility: u.overall,
                    utility_s0: u.per_group[0],
                    utility_s1: u.per_group[1],
                    constraint: c,
                    constraint_true: truth(&actions)?,
                });
            }
            let (u, _) = plugin_from_actions(outcome, dataset, dataset.a())?;
            let (c, _) = modbrk_from_actions(outcome, dataset, dataset.a())?;
            out.push(BaselineResult {
                name: "baseline_policy".into(),
                utility: u.overall,
                utility_s0: u.per_group[0],
                utility_s1: u.per_group[1],
                constraint: c,
                constraint_true: truth(dataset.a())?,
            });
        }
        ConstraintKind::EqB => {
            let (Some(base), Some(var)) = (&p1.baseline, &p1.variances) else {
                return Err(contract("equal benefit needs the baseline net and variances"));
            };
            let mu_base: Vec<f64> = base
                .forward_batch(dataset.policy_inputs(false).view())?
                .column(0)
                .to_vec();
            let (est, _) = ipw_from_means(dataset, &mu_base, &mu_base, var.va, &cfg.ipw)?;
            out.push(BaselineResult {
                name: "baseline_policy".into(),
                utility: est.utility.overall,
                utility_s0: est.utility.per_group[0],
                utility_s1: est.utility.per_group[1],
                constraint: 0.0,
                constraint_true: truth(&mu_base)?,
            });
        }
    }
    Ok(out)
}

fn record(dataset: &Dataset, out: Phase2Output) -> Result<RunRecord> {
    Ok(RunRecord {
        row: out.row,
        histogram: action_histogram(dataset, &out.actions, HISTOGRAM_BINS)?,
        metrics: out.metrics,
    })
}

/// Runs phase II for every `(epsilon, seed)` against shared phase-I models.
///
/// Failed runs are logged and collected; the sweep carries on.
pub fn slack_sweep(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    p1: &Phase1Output,
    gt: Option<&GroundTruth>,
) -> Result<SweepResult> {
    cfg.validate()?;
    if p1.kind != cfg.kind {
        return Err(contract("phase-I outputs were fit for the other constraint"));
    }
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let epsilons = match &cfg.epsilons {
        EpsilonGrid::List(v) => {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
        EpsilonGrid::Auto { count } => {
            let seed = cfg.seeds[0];
            let pilot = run_one(cfg.kind, p1, dataset, f64::INFINITY, seed, &cfg.phase2, false, gt)?;
            let c = pilot.row.constraint;
            info!("unconstrained pilot reached constraint {c}");
            runs.push(record(dataset, pilot)?);
            let inner = count - 2;
            let mut v = vec![0.0];
            v.extend((1..=inner).map(|k| c * k as f64 / (inner + 1) as f64));
            v.push(f64::INFINITY);
            v
        }
    };
    let mut jobs: Vec<(f64, u64)> = Vec::new();
    for &e in &epsilons {
        for &s in &cfg.seeds {
            let done = runs.iter().any(|r| r.row.epsilon == e && r.row.seed == s);
            if !done {
                jobs.push((e, s));
            }
        }
    }
    let work = |&(e, s): &(f64, u64)| -> Result<RunRecord> {
        info!("phase II run epsilon={e} seed={s}");
        record(dataset, run_one(cfg.kind, p1, dataset, e, s, &cfg.phase2, false, gt)?)
    };
    let results: Vec<Result<RunRecord>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(work).collect())
    } else {
        jobs.iter().map(work).collect()
    };
    for ((e, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => runs.push(rec),
            Err(err) => {
                warn!("run epsilon={e} seed={s} failed: {err}");
                failures.push((*e, *s, err.to_string()));
            }
        }
    }
    runs.sort_by(|a, b| a.row.epsilon.total_cmp(&b.row.epsilon).then(a.row.seed.cmp(&b.row.seed)));
    Ok(SweepResult {
        epsilons,
        runs,
        failures,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const FRONTIER_HEADER: [&str; 7] = [
    "epsilon",
    "seed",
    "utility",
    "utility_s0",
    "utility_s1",
    "constraint",
    "constraint_true",
];

pub fn write_frontier<W: Write>(rows: &[FrontierRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FRONTIER_HEADER)?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.seed.to_string(),
            r.utility.to_string(),
            r.utility_s0.to_string(),
            r.utility_s1.to_string(),
            r.constraint.to_string(),
            opt(r.constraint_true),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64, origin: &str) -> Result<T> {
    rec.get(i)
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Parse {
            path: origin.into(),
            line,
            msg: format!("bad value in column `{}`", FRONTIER_HEADER[i]),
        })
}

/// Reads a file written by [`write_frontier`].
pub fn read_frontier<R: Read>(reader: R, origin: &str) -> Result<Vec<FrontierRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != FRONTIER_HEADER {
        return Err(Error::Parse {
            path: origin.into(),
            line: 1,
            msg: format!("header must be `{}`", FRONTIER_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let truth = rec.get(6).unwrap_or("").trim();
        rows.push(FrontierRow {
            epsilon: field(&rec, 0, line, origin)?,
            seed: field(&rec, 1, line, origin)?,
            utility: field(&rec, 2, line, origin)?,
            utility_s0: field(&rec, 3, line, origin)?,
            utility_s1: field(&rec, 4, line, origin)?,
            constraint: field(&rec, 5, line, origin)?,
            constraint_true: if truth.is_empty() { None } else { Some(field(&rec, 6, line, origin)?) },
        });
    }
    Ok(rows)
}

pub fn write_baselines<W: Write>(rows: &[BaselineResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "utility", "utility_s0", "utility_s1", "constraint", "constraint_true"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.utility.to_string(),
            r.utility_s0.to_string(),
            r.utility_s1.to_string(),
            r.constraint.to_string(),
            opt(r.constraint_true),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures<W: Write>(failures: &[(f64, u64, String)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epsilon", "seed", "error"])?;
    for (e, s, msg) in failures {
        w.write_record([e.to_string(), s.to_string(), msg.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(rows: &[HistogramRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_lo", "bin_hi", "count_s0", "count_s1"])?;
    for r in rows {
        w.write_record([
            r.bin_lo.to_string(),
            r.bin_hi.to_string(),
            r.count_s0.to_string(),
            r.count_s1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Seed statistics at one slack value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontierSummary {
    pub epsilon: f64,
    pub runs: usize,
    pub utility_median: f64,
    pub utility_min: f64,
    pub utility_max: f64,
    pub constraint_median: f64,
    pub constraint_min: f64,
    pub constraint_max: f64,
    pub truth_median: Option<f64>,
}

/// Groups rows by epsilon (ascending) and takes medians and ranges over
/// seeds.
pub fn summarize(rows: &[FrontierRow]) -> Vec<FrontierSummary> {
    use crate::stats::median;
    let mut eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let fold = |v: &[f64]| {
        (
            median(v),
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    eps.into_iter()
        .map(|e| {
            let at: Vec<&FrontierRow> = rows.iter().filter(|r| r.epsilon == e).collect();
            let u: Vec<f64> = at.iter().map(|r| r.utility).collect();
            let c: Vec<f64> = at.iter().map(|r| r.constraint).collect();
            let t: Vec<f64> = at.iter().filter_map(|r| r.constraint_true).collect();
            let (um, ulo, uhi) = fold(&u);
            let (cm, clo, chi) = fold(&c);
            FrontierSummary {
                epsilon: e,
                runs: at.len(),
                utility_median: um,
                utility_min: ulo,
                utility_max: uhi,
                constraint_median: cm,
                constraint_min: clo,
                constraint_max: chi,
                truth_median: (t.len() == at.len()).then(|| median(&t)),
            }
        })
        .collect()
}
