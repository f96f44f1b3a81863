//! Moderation-breaking policy optimization over fully discrete variables,
//! solved exactly as a linear program.
//!
//! For binary actions the policy is `pi(s, x) = P(A = 1 | s, x)` and the
//! moderated term of group `s` is `sum_x p(s,x) delta(s,x) pi(s,x)` with
//! `delta = mu_Y(1,.) - mu_Y(0,.)`. For general actions the term is
//! `sum_{a,x} p(s,x) (mu_Y(a,s,x) - mu_Y(a0,s,x)) pi(a,s,x)`, measured
//! against the first action `a0`; with two actions and the sum-to-one rows
//! this is exactly the binary term. Every pair of groups gets two rows
//! bounding the difference of their terms by `+-sqrt(epsilon)`.

mod io;
mod simplex;

pub use io::{bundled_example, read_problem, write_solution, BUNDLED_EXAMPLE};
pub use simplex::{solve as solve_raw, LinearProgram, LpStatus, RawSolution, Row, RowKind};

use crate::error::contract;
use crate::Result;

/// Largest `|a| * |s| * |x|` the enumeration oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 64;
/// Mixture weights are searched on this grid.
pub const ORACLE_GRID: usize = 64;
const ORACLE_TOP_K: usize = 64;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProblem {
    pub actions: Vec<f64>,
    pub groups: Vec<f64>,
    pub covariates: Vec<f64>,
    /// `mu_y[(a * |s| + s) * |x| + x]`.
    pub mu_y: Vec<f64>,
    /// `p[s * |x| + x]`, summing to one.
    pub p: Vec<f64>,
    /// May be infinite.
    pub epsilon: f64,
}

impl DiscreteProblem {
    pub fn new(
        actions: Vec<f64>,
        groups: Vec<f64>,
        covariates: Vec<f64>,
        mu_y: Vec<f64>,
        p: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let (na, ns, nx) = (actions.len(), groups.len(), covariates.len());
        if na == 0 || ns == 0 || nx == 0 {
            return Err(contract("value sets must be nonempty"));
        }
        if mu_y.len() != na * ns * nx {
            return Err(contract(format!(
                "mu_Y table has {} entries, expected {}",
                mu_y.len(),
                na * ns * nx
            )));
        }
        if p.len() != ns * nx {
            return Err(contract(format!("p table has {} entries, expected {}", p.len(), ns * nx)));
        }
        if mu_y.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(contract("tables must be finite"));
        }
        if p.iter().any(|&v| v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(contract("p must be nonnegative and sum to 1"));
        }
        if !(epsilon >= 0.0) {
            return Err(contract(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self {
            actions,
            groups,
            covariates,
            mu_y,
            p,
            epsilon,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.actions.len(), self.groups.len(), self.covariates.len())
    }

    pub fn mu(&self, a: usize, s: usize, x: usize) -> f64 {
        let (_, ns, nx) = self.dims();
        self.mu_y[(a * ns + s) * nx + x]
    }

    pub fn prob(&self, s: usize, x: usize) -> f64 {
        self.p[s * self.dims().2 + x]
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    /// Group pairs `(s, s')` with `s' < s`.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let ns = self.groups.len();
        (0..ns).flat_map(|s| (0..s).map(move |t| (s, t))).collect()
    }

    /// `sum_x p (mu(a) - mu(a0))` weight of cell `(a, s, x)` in group `s`'s
    /// moderated term.
    fn term_weight(&self, a: usize, s: usize, x: usize) -> f64 {
        self.prob(s, x) * (self.mu(a, s, x) - self.mu(0, s, x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// Variables `pi(s, x)`.
    Binary,
    /// Variables `pi(a, s, x)` with sum-to-one rows.
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpInstance {
    pub encoding: Encoding,
    pub lp: LinearProgram,
    /// `(a, s, x)` index per variable; `a` is 1 for binary variables.
    pub var_index: Vec<(usize, usize, usize)>,
    /// Part of the expected outcome not carried by the LP objective.
    pub constant: f64,
    pub inequality_rows: usize,
    pub equality_rows: usize,
}

fn pair_rows(problem: &DiscreteProblem, coef_of: impl Fn(usize, usize) -> f64, nv: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    if problem.epsilon.is_infinite() {
        return rows;
    }
    let root = problem.epsilon.sqrt();
    for (s, t) in problem.pairs() {
        let coef: Vec<f64> = (0..nv).map(|j| coef_of(j, s) - coef_of(j, t)).collect();
        rows.push(Row { coef: coef.clone(), kind: RowKind::Le, rhs: root });
        rows.push(Row { coef, kind: RowKind::Ge, rhs: -root });
    }
    rows
}

pub fn build_lp_binary(problem: &DiscreteProblem) -> Result<LpInstance> {
    let (na, ns, nx) = problem.dims();
    if na != 2 {
        return Err(contract(format!("binary LP needs exactly 2 actions, got {na}")));
    }
    let var_index: Vec<(usize, usize, usize)> =
        (0..ns).flat_map(|s| (0..nx).map(move |x| (1, s, x))).collect();
    let objective: Vec<f64> = var_index
        .iter()
        .map(|&(_, s, x)| problem.term_weight(1, s, x))
        .collect();
    let constant = (0..ns)
        .flat_map(|s| (0..nx).map(move |x| (s, x)))
        .map(|(s, x)| problem.prob(s, x) * problem.mu(0, s, x))
        .sum();
    let nv = var_index.len();
    let rows = pair_rows(
        problem,
        |j, g| if var_index[j].1 == g { objective[j] } else { 0.0 },
        nv,
    );
    Ok(LpInstance {
        encoding: Encoding::Binary,
        inequality_rows: rows.len(),
        equality_rows: 0,
        lp: LinearProgram {
            objective,
            rows,
            upper: vec![1.0; nv],
        },
        var_index,
        constant,
    })
}

pub fn build_lp_general(problem: &DiscreteProblem) -> Result<LpInstance> {
    let (na, ns, nx) = problem.dims();
    if na < 2 {
        return Err(contract("general LP needs at least 2 actions"));
    }
    let var_index: Vec<(usize, usize, usize)> = (0..na)
        .flat_map(|a| (0..ns).flat_map(move |s| (0..nx).map(move |x| (a, s, x))))
        .collect();
    let nv = var_index.len();
    let objective: Vec<f64> = var_index
        .iter()
        .map(|&(a, s, x)| problem.prob(s, x) * problem.mu(a, s, x))
        .collect();
    let mut rows = pair_rows(
        problem,
        |j, g| {
            let (a, s, x) = var_index[j];
            if s == g { problem.term_weight(a, s, x) } else { 0.0 }
        },
        nv,
    );
    let inequality_rows = rows.len();
    for s in 0..ns {
        for x in 0..nx {
            let coef = var_index
                .iter()
                .map(|&(_, vs, vx)| if (vs, vx) == (s, x) { 1.0 } else { 0.0 })
                .collect();
            rows.push(Row { coef, kind: RowKind::Eq, rhs: 1.0 });
        }
    }
    Ok(LpInstance {
        encoding: Encoding::General,
        inequality_rows,
        equality_rows: ns * nx,
        lp: LinearProgram {
            objective,
            rows,
            upper: vec![f64::INFINITY; nv],
        },
        var_index,
        constant: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    /// Value of the LP objective (constant dropped in the binary case).
    pub objective: f64,
    /// Full expected outcome `E[Y]` under the solution.
    pub expected_outcome: f64,
}

impl LpSolution {
    /// Policy table `probs[(a * |s| + s) * |x| + x]`.
    pub fn policy(&self, instance: &LpInstance, problem: &DiscreteProblem) -> Vec<f64> {
        let (na, ns, nx) = problem.dims();
        let mut out = vec![0.0; na * ns * nx];
        for (&(a, s, x), &v) in instance.var_index.iter().zip(&self.values) {
            match instance.encoding {
                Encoding::General => out[(a * ns + s) * nx + x] = v,
                Encoding::Binary => {
                    out[(ns + s) * nx + x] = v;
                    out[s * nx + x] = 1.0 - v;
                }
            }
        }
        out
    }
}

pub fn simplex_solve(instance: &LpInstance) -> Result<LpSolution> {
    let raw = simplex::solve(&instance.lp)?;
    Ok(LpSolution {
        status: raw.status,
        expected_outcome: raw.objective + instance.constant,
        objective: raw.objective,
        values: raw.x,
    })
}

/// Builds and solves the program using the binary encoding for two actions.
pub fn solve_problem(problem: &DiscreteProblem) -> Result<(LpInstance, LpSolution)> {
    let inst = if problem.actions.len() == 2 {
        build_lp_binary(problem)?
    } else {
        build_lp_general(problem)?
    };
    let sol = simplex_solve(&inst)?;
    Ok((inst, sol))
}

/// Largest violation of any row or bound of `lp` at `x`.
pub fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (v, u) in x.iter().zip(&lp.upper) {
        worst = worst.max(-v).max(v - u);
    }
    for r in &lp.rows {
        let lhs: f64 = r.coef.iter().zip(x).map(|(c, v)| c * v).sum();
        let d = match r.kind {
            RowKind::Le => lhs - r.rhs,
            RowKind::Ge => r.rhs - lhs,
            RowKind::Eq => (lhs - r.rhs).abs(),
        };
        worst = worst.max(d);
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Best expected outcome found.
    pub value: f64,
    /// Policy table in the layout of [`LpSolution::policy`].
    pub policy: Vec<f64>,
    pub mixed: bool,
}

/// Per deterministic policy: expected outcome and each group's moderated
/// term.
fn score(problem: &DiscreteProblem, choice: &[usize]) -> (f64, Vec<f64>) {
    let (_, ns, nx) = problem.dims();
    let mut value = 0.0;
    let mut terms = vec![0.0; ns];
    for s in 0..ns {
        for x in 0..nx {
            let a = choice[s * nx + x];
            value += problem.prob(s, x) * problem.mu(a, s, x);
            terms[s] += problem.term_weight(a, s, x);
        }
    }
    (value, terms)
}

fn feasible(problem: &DiscreteProblem, terms: &[f64]) -> bool {
    if problem.epsilon.is_infinite() {
        return true;
    }
    let root = problem.epsilon.sqrt();
    problem
        .pairs()
        .into_iter()
        .all(|(s, t)| (terms[s] - terms[t]).abs() <= root + FEAS_TOL)
}

fn table(problem: &DiscreteProblem, mix: &[(f64, &[usize])]) -> Vec<f64> {
    let (na, ns, nx) = problem.dims();
    let mut out = vec![0.0; na * ns * nx];
    for &(w, choice) in mix {
        for s in 0..ns {
            for x in 0..nx {
                out[(choice[s * nx + x] * ns + s) * nx + x] += w;
            }
        }
    }
    out
}

/// Brute-force optimum: every deterministic policy, then, when the
/// unconstrained best is infeasible, two-policy mixtures `w P + (1 - w) Q`
/// with `w` on a 1/64 grid, `P` among the best 64 policies by value and `Q`
/// any policy.
pub fn enumerate_oracle(problem: &DiscreteProblem) -> Result<OracleResult> {
    let (na, ns, nx) = problem.dims();
    if na * ns * nx > ORACLE_MAX_CELLS {
        return Err(contract(format!(
            "oracle limited to {ORACLE_MAX_CELLS} cells, got {}",
            na * ns * nx
        )));
    }
    let cells = ns * nx;
    let count = na.checked_pow(cells as u32).filter(|&c| c <= 1 << 20).ok_or_else(|| {
        contract(format!("{na}^{cells} deterministic policies is too many to enumerate"))
    })?;
    let mut policies: Vec<(Vec<usize>, f64, Vec<f64>)> = Vec::with_capacity(count);
    for code in 0..count {
        let mut c = code;
        let choice: Vec<usize> = (0..cells)
            .map(|_| {
                let a = c % na;
                c /= na;
                a
            })
            .collect();
        let (v, terms) = score(problem, &choice);
        policies.push((choice, v, terms));
    }
    let best_any = policies
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one policy");
    if feasible(problem, &best_any.2) {
        return Ok(OracleResult {
            value: best_any.1,
            policy: table(problem, &[(1.0, &best_any.0)]),
            mixed: false,
        });
    }
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for p in &policies {
        if feasible(problem, &p.2) && best.as_ref().is_none_or(|b| p.1 > b.0) {
            best = Some((p.1, table(problem, &[(1.0, &p.0)]), false));
        }
    }
    let mut order: Vec<usize> = (0..policies.len()).collect();
    order.sort_by(|&i, &j| policies[j].1.total_cmp(&policies[i].1));
    let mut terms = vec![0.0; ns];
    for &i in order.iter().take(ORACLE_TOP_K) {
        let (ref pc, pv, ref pt) = policies[i];
        for (qc, qv, qt) in &policies {
            if pv <= *qv {
                continue;
            }
            for k in 1..ORACLE_GRID {
                let w = k as f64 / ORACLE_GRID as f64;
                let v = w * pv + (1.0 - w) * qv;
                if best.as_ref().is_some_and(|b| v <= b.0) {
                    continue;
                }
                for s in 0..ns {
                    terms[s] = w * pt[s] + (1.0 - w) * qt[s];
                }
                if feasible(problem, &terms) {
                    best = Some((v, table(problem, &[(w, pc), (1.0 - w, qc)]), true));
                }
            }
        }
    }
    let (value, policy, mixed) =
        best.ok_or_else(|| contract("no feasible policy found by enumeration"))?;
    Ok(OracleResult { value, policy, mixed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(eps: f64) -> DiscreteProblem {
        // 2 actions, 2 groups, 1 covariate value.
        DiscreteProblem::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0],
            vec![1.0, 2.0, 3.0, 2.5],
            vec![0.5, 0.5],
            eps,
        )
        .unwrap()
    }

    #[test]
    fn binary_counts_and_bang_bang() {
        let inst = build_lp_binary(&problem(0.1)).unwrap();
        assert_eq!(inst.lp.objective.len(), 2);
        assert_eq!(inst.inequality_rows, 2);
        let (_, sol) = solve_problem(&problem(f64::INFINITY)).unwrap();
        assert_eq!(sol.values, vec![1.0, 1.0]);
        assert!((sol.expected_outcome - 0.5 * (3.0 + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_slack_equalizes_terms() {
        let pb = problem(0.0);
        let (inst, sol) = solve_problem(&pb).unwrap();
        // delta = (2, 0.5): terms 0.5*2*pi0 and 0.5*0.5*pi1 must match.
        let t0 = 0.5 * 2.0 * sol.values[0];
        let t1 = 0.5 * 0.5 * sol.values[1];
        assert!((t0 - t1).abs() < 1e-9);
        assert!(max_violation(&inst.lp, &sol.values) < 1e-9);
        assert!((sol.values[1] - 1.0).abs() < 1e-9 && (sol.values[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn general_counts() {
        let pb = DiscreteProblem::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            (0..12).map(|v| v as f64).collect(),
            vec![0.25; 4],
            0.5,
        )
        .unwrap();
        let inst = build_lp_general(&pb).unwrap();
        assert_eq!(inst.var_index.len(), 12);
        assert_eq!(inst.equality_rows, 4);
        assert!(build_lp_binary(&pb).is_err());
    }

    #[test]
    fn constant_outcome_is_flat() {
        let pb = DiscreteProblem::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0],
            vec![0.0],
            vec![4.0; 6],
            vec![0.3, 0.7],
            0.0,
        )
        .unwrap();
        let (_, sol) = solve_problem(&pb).unwrap();
        assert!((sol.expected_outcome - 4.0).abs() < 1e-9);
    }

    #[test]
    fn binary_and_general_agree() {
        for eps in [0.0, 0.01, 0.3, f64::INFINITY] {
            let pb = problem(eps);
            let b = simplex_solve(&build_lp_binary(&pb).unwrap()).unwrap();
            let g = simplex_solve(&build_lp_general(&pb).unwrap()).unwrap();
            assert!((b.expected_outcome - g.expected_outcome).abs() < 1e-9, "eps {eps}");
        }
    }

    #[test]
    fn oracle_matches_on_small_case() {
        let pb = problem(0.0);
        let o = enumerate_oracle(&pb).unwrap();
        let (_, sol) = solve_problem(&pb).unwrap();
        assert!(o.value <= sol.expected_outcome + 1e-9);
        assert!(o.value >= sol.expected_outcome - 1e-2);
        let o = enumerate_oracle(&problem(f64::INFINITY)).unwrap();
        assert!(!o.mixed);
        assert!((o.value - 2.75).abs() < 1e-12);
    }
}
