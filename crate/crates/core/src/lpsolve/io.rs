//! Problem and solution files.
//!
//! A problem file holds two CSV tables separated by a blank line: first
//! `a,s,x,muY` with one row per cell, then `s,x,p`. Value sets are the
//! distinct values seen in each column, sorted ascending.

use std::io::Write;
use std::path::Path;

use super::{DiscreteProblem, LpInstance, LpSolution};
use crate::{Error, Result};

/// 2 actions x 2 groups x 1 covariate value.
pub const BUNDLED_EXAMPLE: &str = include_str!("../../data/lp_example.csv");

pub fn bundled_example() -> Result<DiscreteProblem> {
    read_problem(BUNDLED_EXAMPLE, Path::new("data/lp_example.csv"))
}

fn perr(origin: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line: line as u64,
        msg: msg.into(),
    }
}

fn parse_fields(origin: &Path, line: usize, text: &str, n: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(perr(origin, line, format!("expected {n} fields, got {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(origin, line, format!("`{f}` is not a finite number")))
        })
        .collect()
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn position(set: &[f64], v: f64) -> usize {
    set.iter().position(|&u| u == v).expect("value collected from the same table")
}

/// Parses a problem file; `epsilon` is left infinite.
pub fn read_problem(text: &str, origin: &Path) -> Result<DiscreteProblem> {
    let mut sections: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !sections.last().expect("nonempty").is_empty() {
                sections.push(Vec::new());
            }
            continue;
        }
        sections.last_mut().expect("nonempty").push((i + 1, line));
    }
    sections.retain(|s| !s.is_empty());
    if sections.len() != 2 {
        return Err(perr(origin, 0, "expected an `a,s,x,muY` table and an `s,x,p` table"));
    }
    let (mu_hdr, p_hdr) = (sections[0][0], sections[1][0]);
    if mu_hdr.1.replace(' ', "") != "a,s,x,muY" {
        return Err(perr(origin, mu_hdr.0, "first table header must be `a,s,x,muY`"));
    }
    if p_hdr.1.replace(' ', "") != "s,x,p" {
        return Err(perr(origin, p_hdr.0, "second table header must be `s,x,p`"));
    }
    let mu_rows: Vec<(usize, Vec<f64>)> = sections[0][1..]
        .iter()
        .map(|&(l, t)| parse_fields(origin, l, t, 4).map(|v| (l, v)))
        .collect::<Result<_>>()?;
    let p_rows: Vec<(usize, Vec<f64>)> = sections[1][1..]
        .iter()
        .map(|&(l, t)| parse_fields(origin, l, t, 3).map(|v| (l, v)))
        .collect::<Result<_>>()?;
    let actions = distinct(mu_rows.iter().map(|r| r.1[0]));
    let groups = distinct(mu_rows.iter().map(|r| r.1[1]));
    let covariates = distinct(mu_rows.iter().map(|r| r.1[2]));
    let (na, ns, nx) = (actions.len(), groups.len(), covariates.len());
    let mut mu_y = vec![f64::NAN; na * ns * nx];
    for (l, r) in &mu_rows {
        let k = (position(&actions, r[0]) * ns + position(&groups, r[1])) * nx
            + position(&covariates, r[2]);
        if !mu_y[k].is_nan() {
            return Err(perr(origin, *l, "duplicate muY cell"));
        }
        mu_y[k] = r[3];
    }
    if mu_y.iter().any(|v| v.is_nan()) {
        return Err(perr(origin, mu_hdr.0, "muY table is missing cells"));
    }
    let mut p = vec![f64::NAN; ns * nx];
    for (l, r) in &p_rows {
        let (Some(s), Some(x)) = (
            groups.iter().position(|&g| g == r[0]),
            covariates.iter().position(|&c| c == r[1]),
        ) else {
            return Err(perr(origin, *l, "p row refers to an (s, x) absent from muY"));
        };
        if !p[s * nx + x].is_nan() {
            return Err(perr(origin, *l, "duplicate p cell"));
        }
        p[s * nx + x] = r[2];
    }
    if p.iter().any(|v| v.is_nan()) {
        return Err(perr(origin, p_hdr.0, "p table is missing cells"));
    }
    DiscreteProblem::new(actions, groups, covariates, mu_y, p, f64::INFINITY).map_err(|e| match e {
        Error::Contract(msg) => perr(origin, 0, msg),
        other => other,
    })
}

/// CSV with header `a,s,x,prob`, one row per cell.
pub fn write_solution<W: Write>(
    problem: &DiscreteProblem,
    instance: &LpInstance,
    solution: &LpSolution,
    writer: W,
) -> Result<()> {
    let probs = solution.policy(instance, problem);
    let (na, ns, nx) = problem.dims();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["a", "s", "x", "prob"])?;
    for a in 0..na {
        for s in 0..ns {
            for x in 0..nx {
                // Clean up round-off so files are stable.
                let v = probs[(a * ns + s) * nx + x];
                let v = if v.abs() < 1e-12 { 0.0 } else { v };
                w.write_record([
                    problem.actions[a].to_string(),
                    problem.groups[s].to_string(),
                    problem.covariates[x].to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
