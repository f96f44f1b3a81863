//! Phase-I outputs on disk: one text file per net plus a summary.

use std::fs;
use std::path::Path;

use super::{ConstraintKind, OutcomeNet, Phase1Output};
use crate::estimators::VarianceEstimates;
use crate::nnet::{read_affine, read_structured, write_affine, write_structured};
use crate::{Error, Result};

const SUMMARY: &str = "phase1.txt";
const OUTCOME: &str = "outcome.net";
const BASELINE: &str = "baseline.net";
const TRACE: &str = "phase1_trace.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `phase1.txt`, `outcome.net`, `phase1_trace.csv` and, for equal
/// benefit, `baseline.net` into `dir`.
pub fn save_phase1(p1: &Phase1Output, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let outcome = match &p1.outcome {
        OutcomeNet::Structured(n) => write_structured(n),
        OutcomeNet::Plain(n) => write_affine(n),
    };
    fs::write(dir.join(OUTCOME), outcome)?;
    if let Some(b) = &p1.baseline {
        fs::write(dir.join(BASELINE), write_affine(b))?;
    }
    let mut summary = format!(
        "constraint={}\nholdout_r2={}\n",
        p1.kind.name(),
        p1.holdout_r2
    );
    if let Some(v) = &p1.variances {
        summary += &format!("va={}\nvy={}\n", v.va, v.vy);
    }
    fs::write(dir.join(SUMMARY), summary)?;

    let mut w = csv::Writer::from_path(dir.join(TRACE))?;
    w.write_record(["epoch", "outcome_loss", "baseline_loss"])?;
    let n = p1.outcome_trace.len().max(p1.baseline_trace.len());
    for i in 0..n {
        w.write_record([
            i.to_string(),
            opt(p1.outcome_trace.get(i).copied()),
            opt(p1.baseline_trace.get(i).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn bad(dir: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: dir.join(SUMMARY),
        line: 0,
        msg: msg.into(),
    }
}

/// Reads a directory written by [`save_phase1`]. Loss traces are read back.
pub fn load_phase1(dir: &Path) -> Result<Phase1Output> {
    let summary = fs::read_to_string(dir.join(SUMMARY))?;
    let mut kind = None;
    let (mut r2, mut va, mut vy) = (None, None, None);
    for line in summary.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(dir, format!("bad line `{line}`")))?;
        let num = || v.trim().parse::<f64>().map_err(|_| bad(dir, format!("bad number for {k}")));
        match k.trim() {
            "constraint" => kind = Some(v.trim().parse::<ConstraintKind>()?),
            "holdout_r2" => r2 = Some(num()?),
            "va" => va = Some(num()?),
            "vy" => vy = Some(num()?),
            other => return Err(bad(dir, format!("unknown key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| bad(dir, "missing constraint"))?;
    let text = fs::read_to_string(dir.join(OUTCOME))?;
    let (outcome, baseline, variances) = match kind {
        ConstraintKind::ModBrk => (OutcomeNet::Structured(read_structured(&text)?), None, None),
        ConstraintKind::EqB => {
            let base = read_affine(&fs::read_to_string(dir.join(BASELINE))?)?;
            let (Some(va), Some(vy)) = (va, vy) else {
                return Err(bad(dir, "equal benefit needs va and vy"));
            };
            (
                OutcomeNet::Plain(read_affine(&text)?),
                Some(base),
                Some(VarianceEstimates { va, vy }),
            )
        }
    };
    let mut outcome_trace = Vec::new();
    let mut baseline_trace = Vec::new();
    if dir.join(TRACE).exists() {
        let mut r = csv::Reader::from_path(dir.join(TRACE))?;
        for rec in r.records() {
            let rec = rec?;
            if let Some(v) = rec.get(1).and_then(|f| f.parse().ok()) {
                outcome_trace.push(v);
            }
            if let Some(v) = rec.get(2).and_then(|f| f.parse().ok()) {
                baseline_trace.push(v);
            }
        }
    }
    Ok(Phase1Output {
        kind,
        outcome,
        baseline,
        variances,
        outcome_trace,
        baseline_trace,
        holdout_r2: r2.unwrap_or(f64::NAN),
    })
}
