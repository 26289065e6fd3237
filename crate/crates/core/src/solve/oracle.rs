//! Brute-force reference solver for tiny instances.
//!
//! Enumerates activation sets directly and solves each allocation on its own
//! terms: a time sweep when the budget is slack, a mixed-integer program via
//! `microlp` otherwise, and exhaustive choice enumeration in the binary case.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::model::{ProblemInstance, Variant};
use crate::population::survival_fraction;

pub const MAX_TRIPLES: usize = 16;
pub const MAX_USERS: usize = 6;

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    /// `None` when no activation set admits a feasible allocation.
    pub objective: Option<f64>,
    /// Indices of the best activation set.
    pub active: Vec<usize>,
    pub sets_evaluated: usize,
}

pub fn oracle_enumerate(inst: &ProblemInstance) -> Result<OracleOutcome> {
    let m = inst.triples.len();
    let n = inst.users.len();
    if m > MAX_TRIPLES || n > MAX_USERS {
        return Err(Error::TooLarge { triples: m, users: n });
    }
    // Values only grow with more active triples, so sets of the largest
    // admissible size suffice.
    let size = inst.config.max_representations.min(m);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0;
    for mask in 0u32..(1u32 << m) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let active: Vec<usize> = (0..m).filter(|t| mask & (1 << t) != 0).collect();
        evaluated += 1;
        if let Some(v) = best_allocation(inst, &active)?
            && best.as_ref().is_none_or(|(b, _)| v > *b + TOL) {
                best = Some((v, active));
            }
    }
    Ok(OracleOutcome {
        objective: best.as_ref().map(|b| b.0),
        active: best.map(|b| b.1).unwrap_or_default(),
        sets_evaluated: evaluated,
    })
}

/// A user's playable options under `active`: (triple, rate, score, survival).
fn options(inst: &ProblemInstance, u: usize, active: &[usize]) -> Vec<(usize, f64, f64, f64)> {
    let binary = inst.config.variant == Variant::Binary;
    let mut out: Vec<(usize, f64, f64, f64)> = active
        .iter()
        .filter_map(|&t| {
            let score = inst.score(u, t)?;
            let rate = inst.triples[t].rate as f64;
            let mut surv = survival_fraction(&inst.users[u].throughput, rate);
            if binary {
                surv = if surv >= 1.0 - 1e-12 { 1.0 } else { 0.0 };
            }
            Some((t, rate, score, surv))
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

fn best_allocation(inst: &ProblemInstance, active: &[usize]) -> Result<Option<f64>> {
    let n = inst.users.len();
    let opts: Vec<_> = (0..n).map(|u| options(inst, u, active)).collect();
    let t_min = inst.config.min_serving_time;
    let req = inst.required_served();
    let budget = inst.total_budget();

    if inst.config.variant == Variant::Binary {
        return Ok(binary_enumeration(&opts, budget, req, t_min));
    }

    // Sweep each user's time from the highest capacity down.
    let mut value = 0.0;
    let mut delivered = 0.0;
    let mut served = 0;
    for list in &opts {
        let mut serving = 0.0;
        let mut i = 0;
        while i < list.len() {
            let rate = list[i].1;
            let mut end = i;
            while end < list.len() && list[end].1 == rate {
                end += 1;
            }
            let above = if end < list.len() { list[end].3 } else { 0.0 };
            let mass = (list[i].3 - above).max(0.0);
            if mass > 0.0 {
                let pick = list[..end]
                    .iter()
                    .fold(None::<&(usize, f64, f64, f64)>, |b, o| if b.is_none_or(|b| o.2 > b.2) { Some(o) } else { b });
                if let Some(p) = pick {
                    value += mass * p.2;
                    delivered += mass * p.1;
                    serving += mass;
                }
            }
            i = end;
        }
        if t_min <= 0.0 || serving >= t_min - TOL {
            served += 1;
        }
    }
    if budget.is_none_or(|b| delivered <= b + TOL * b.max(1.0)) {
        return Ok((served >= req || t_min <= 0.0).then_some(value));
    }
    mixed_integer(&opts, budget.expect("checked"), req, t_min)
}

fn mixed_integer(
    opts: &[Vec<(usize, f64, f64, f64)>],
    budget: f64,
    req: usize,
    t_min: f64,
) -> Result<Option<f64>> {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let mut budget_row = Vec::new();
    let mut gammas = Vec::new();
    let fairness = t_min > 0.0 && req > 0;
    for list in opts {
        let vars: Vec<_> = list.iter().map(|o| (p.add_var(o.2, (0.0, 1.0)), o.1, o.3)).collect();
        for &(_, rate, _, surv) in list {
            let above: Vec<_> = vars.iter().filter(|v| v.1 >= rate).map(|v| (v.0, 1.0)).collect();
            p.add_constraint(above.as_slice(), ComparisonOp::Le, surv);
        }
        if !vars.is_empty() {
            let all: Vec<_> = vars.iter().map(|v| (v.0, 1.0)).collect();
            p.add_constraint(all.as_slice(), ComparisonOp::Le, 1.0);
        }
        budget_row.extend(vars.iter().map(|v| (v.0, v.1)));
        if fairness {
            let g = p.add_binary_var(0.0);
            let mut row: Vec<_> = vars.iter().map(|v| (v.0, 1.0)).collect();
            row.push((g, -t_min));
            p.add_constraint(row.as_slice(), ComparisonOp::Ge, 0.0);
            gammas.push((g, 1.0));
        }
    }
    if !budget_row.is_empty() {
        p.add_constraint(budget_row.as_slice(), ComparisonOp::Le, budget);
    }
    if fairness {
        p.add_constraint(gammas.as_slice(), ComparisonOp::Ge, req as f64);
    }
    match p.solve() {
        Ok(outcome) => match outcome.into_solution() {
            Ok(sol) => Ok(Some(sol.objective())),
            Err(_) => Err(Error::Backend("reference solve interrupted".into())),
        },
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::Backend(e.to_string())),
    }
}

/// Every combination of one option (or none) per user.
fn binary_enumeration(opts: &[Vec<(usize, f64, f64, f64)>], budget: Option<f64>, req: usize, t_min: f64) -> Option<f64> {
    fn go(
        u: usize,
        opts: &[Vec<(usize, f64, f64, f64)>],
        budget: Option<f64>,
        req: usize,
        t_min: f64,
        acc: (f64, f64, usize),
        best: &mut Option<f64>,
    ) {
        if budget.is_some_and(|b| acc.1 > b + TOL * b.max(1.0)) {
            return;
        }
        if u == opts.len() {
            if (t_min <= 0.0 || acc.2 >= req)
                && best.is_none_or(|b| acc.0 > b) {
                    *best = Some(acc.0);
                }
            return;
        }
        go(u + 1, opts, budget, req, t_min, acc, best);
        for o in opts[u].iter().filter(|o| o.3 >= 1.0) {
            go(u + 1, opts, budget, req, t_min, (acc.0 + o.2, acc.1 + o.1, acc.2 + 1), best);
        }
    }
    let mut best = None;
    go(0, opts, budget, req, t_min, (0.0, 0.0, 0), &mut best);
    best
}
