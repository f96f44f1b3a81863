//! Dense two-phase tableau simplex.

use crate::error::contract;
use crate::Result;

const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coef: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `max c.x` subject to `rows`, `0 <= x <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    /// Per-variable upper bound; `f64::INFINITY` for none.
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `m` constraint rows then the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    pivots: usize,
    bland_after: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn ncols(&self) -> usize {
        self.t[0].len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in &mut self.t[r] {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs simplex iterations maximizing the objective row, which stores
    /// reduced costs `r_j` (enter while some `r_j > 0`). Columns flagged in
    /// `blocked` never enter. Returns false when unbounded.
    fn run(&mut self, blocked: &[bool]) -> bool {
        let m = self.m();
        let n = self.ncols();
        loop {
            let obj = &self.t[m];
            let bland = self.pivots >= self.bland_after;
            let mut enter = None;
            let mut best = TOL;
            for j in 0..n {
                if blocked[j] || obj[j] <= TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if obj[j] > best {
                    best = obj[j];
                    enter = Some(j);
                }
            }
            let Some(c) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > TOL {
                    let ratio = self.t[i][n] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - TOL
                                || (ratio <= lr + TOL && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.m();
        let n = self.ncols();
        let mut obj = vec![0.0; n + 1];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..=n {
                    obj[j] -= cb * self.t[i][j];
                }
            }
        }
        self.t[m] = obj;
    }
}

pub fn solve(lp: &LinearProgram) -> Result<RawSolution> {
    let nv = lp.objective.len();
    if lp.upper.len() != nv {
        return Err(contract("one upper bound per variable required"));
    }
    let mut rows: Vec<Row> = lp.rows.clone();
    for r in &rows {
        if r.coef.len() != nv {
            return Err(contract("row width differs from variable count"));
        }
    }
    let finite = lp
        .objective
        .iter()
        .chain(rows.iter().flat_map(|r| r.coef.iter().chain(std::iter::once(&r.rhs))))
        .all(|v| v.is_finite());
    if !finite {
        return Err(contract("LP data must be finite"));
    }
    for (j, &u) in lp.upper.iter().enumerate() {
        if !(u >= 0.0) {
            return Err(contract(format!("upper bound of variable {j} is negative")));
        }
        if u.is_finite() {
            let mut coef = vec![0.0; nv];
            coef[j] = 1.0;
            rows.push(Row { coef, kind: RowKind::Le, rhs: u });
        }
    }
    for r in &mut rows {
        if r.rhs < 0.0 {
            r.coef.iter_mut().for_each(|v| *v = -*v);
            r.rhs = -r.rhs;
            r.kind = match r.kind {
                RowKind::Le => RowKind::Ge,
                RowKind::Ge => RowKind::Le,
                RowKind::Eq => RowKind::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.kind != RowKind::Eq).count();
    let n_art = rows.iter().filter(|r| r.kind != RowKind::Le).count();
    let ncols = nv + n_slack + n_art;
    let mut t = vec![vec![0.0; ncols + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut is_art = vec![false; ncols];
    let (mut next_slack, mut next_art) = (nv, nv + n_slack);
    for (i, r) in rows.iter().enumerate() {
        t[i][..nv].copy_from_slice(&r.coef);
        t[i][ncols] = r.rhs;
        match r.kind {
            RowKind::Le => {
                t[i][next_slack] = 1.0;
                basis[i] = next_slack;
                next_slack += 1;
            }
            RowKind::Ge => {
                t[i][next_slack] = -1.0;
                next_slack += 1;
                t[i][next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                next_art += 1;
            }
            RowKind::Eq => {
                t[i][next_art] = 1.0;
                is_art[next_art] = true;
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        pivots: 0,
        bland_after: 2 * (m + ncols),
    };
    let no_block = vec![false; ncols];

    if n_art > 0 {
        let phase1: Vec<f64> = is_art.iter().map(|&a| if a { -1.0 } else { 0.0 }).collect();
        tab.set_objective(&phase1);
        tab.run(&no_block);
        // The objective row's rhs holds minus the current objective value.
        let infeas = tab.t[m][ncols];
        if infeas > 1e-7 {
            return Ok(RawSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; nv],
                objective: f64::NAN,
                pivots: tab.pivots,
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if is_art[tab.basis[i]] {
                if let Some(c) = (0..ncols).find(|&j| !is_art[j] && tab.t[i][j].abs() > TOL) {
                    tab.pivot(i, c);
                }
            }
        }
    }
    let mut cost = lp.objective.clone();
    cost.resize(ncols, 0.0);
    tab.set_objective(&cost);
    let bounded = tab.run(&is_art);
    let mut x = vec![0.0; nv];
    for i in 0..m {
        if tab.basis[i] < nv {
            x[tab.basis[i]] = tab.t[i][ncols];
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(RawSolution {
        status: if bounded { LpStatus::Optimal } else { LpStatus::Unbounded },
        x,
        objective,
        pivots: tab.pivots,
    })
}
