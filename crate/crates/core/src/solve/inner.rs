//! Optimal time allocation for a fixed set of active representations.

use crate::model::{Allocation, FEAS_TOL, ProblemInstance, Variant};

use super::simplex::{LinearProgram, LpOutcome, Sense, maximize};

#[derive(Clone, Copy, Debug)]
pub struct InnerLimits {
    /// Largest inner program solved exactly by branch and bound.
    pub max_vars: usize,
    pub max_nodes: usize,
}

impl Default for InnerLimits {
    fn default() -> Self {
        Self { max_vars: 160, max_nodes: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    /// `None` when no allocation satisfies the constraints.
    pub alloc: Option<Allocation>,
    pub value: f64,
    /// False when a heuristic produced the answer.
    pub exact: bool,
}

impl InnerResult {
    fn infeasible(exact: bool) -> Self {
        Self { alloc: None, value: f64::NEG_INFINITY, exact }
    }

    fn feasible(inst: &ProblemInstance, alloc: Allocation, exact: bool) -> Self {
        let value = allocation_value(inst, &alloc);
        Self { alloc: Some(alloc), value, exact }
    }
}

pub fn allocation_value(inst: &ProblemInstance, alloc: &Allocation) -> f64 {
    alloc
        .per_user
        .iter()
        .enumerate()
        .map(|(u, row)| row.iter().map(|&(t, s)| s * inst.score(u, t).unwrap_or(0.0)).sum::<f64>())
        .sum()
}

pub fn allocation_rate(inst: &ProblemInstance, alloc: &Allocation) -> f64 {
    alloc.per_user.iter().flatten().map(|&(t, s)| s * inst.triples[t].rate as f64).sum()
}

fn within_budget(budget: Option<f64>, delivered: f64) -> bool {
    budget.is_none_or(|b| delivered <= b * (1.0 + FEAS_TOL) + FEAS_TOL)
}

/// Unbudgeted greedy value and its delivered rate, from merged items.
pub fn greedy_totals(inst: &ProblemInstance, active: &[bool]) -> (f64, f64) {
    let best = inst.prefix_best(active);
    let mut value = 0.0;
    let mut rate = 0.0;
    for item in &inst.items {
        if let Some(b) = best[item.class][item.feasible] {
            let o = &inst.classes[item.class].options[b];
            value += item.mass * o.score;
            rate += item.mass * o.rate as f64;
        }
    }
    (value, rate)
}

/// Users whose longest possible serving time reaches the minimum.
pub fn servable_count(inst: &ProblemInstance, active: &[bool]) -> usize {
    (0..inst.users.len()).filter(|&u| inst.servable(u, active)).count()
}

/// Whether the cheapest way to serve the required users fits the budget.
pub fn serving_affordable(inst: &ProblemInstance, active: &[bool]) -> bool {
    let Some(budget) = inst.total_budget() else { return true };
    let t_min = inst.config.min_serving_time;
    let req = inst.required_served();
    if t_min <= 0.0 || req == 0 {
        return true;
    }
    let mut costs: Vec<f64> = (0..inst.users.len())
        .filter(|&u| inst.servable(u, active))
        .filter_map(|u| inst.user_options(u).iter().find(|o| active[o.triple]).map(|o| t_min * o.rate as f64))
        .collect();
    if costs.len() < req {
        return false;
    }
    costs.sort_by(f64::total_cmp);
    within_budget(Some(budget), costs[..req].iter().sum())
}

struct HullPoint {
    rate: f64,
    score: f64,
    option: usize,
}

/// Upper concave hull, from the origin, of an item's active options.
fn item_hull(inst: &ProblemInstance, class: usize, feasible: usize, active: &[bool]) -> Vec<HullPoint> {
    let opts = &inst.classes[class].options[..feasible];
    let mut frontier: Vec<HullPoint> = Vec::new();
    for (i, o) in opts.iter().enumerate() {
        if !active[o.triple] {
            continue;
        }
        let last_score = frontier.last().map_or(0.0, |p| p.score);
        if o.score <= last_score {
            continue;
        }
        if frontier.last().is_some_and(|p| p.rate == o.rate as f64) {
            frontier.pop();
        }
        frontier.push(HullPoint { rate: o.rate as f64, score: o.score, option: i });
    }
    let mut hull: Vec<HullPoint> = vec![HullPoint { rate: 0.0, score: 0.0, option: usize::MAX }];
    for p in frontier {
        while hull.len() >= 2 {
            let a = &hull[hull.len() - 2];
            let b = &hull[hull.len() - 1];
            if (b.score - a.score) * (p.rate - a.rate) <= (p.score - a.score) * (b.rate - a.rate) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Budgeted allocation ignoring fairness: the linear relaxation of a
/// multiple-choice knapsack, filled by decreasing marginal satisfaction per kbps.
pub fn hull_allocation(inst: &ProblemInstance, active: &[bool], with_alloc: bool) -> (Option<Allocation>, f64) {
    let budget = inst.total_budget().unwrap_or(f64::INFINITY);
    let hulls: Vec<Vec<HullPoint>> =
        inst.items.iter().map(|it| item_hull(inst, it.class, it.feasible, active)).collect();
    let mut segments: Vec<(f64, usize, usize)> = Vec::new();
    for (i, hull) in hulls.iter().enumerate() {
        for s in 1..hull.len() {
            let slope = (hull[s].score - hull[s - 1].score) / (hull[s].rate - hull[s - 1].rate);
            segments.push((slope, i, s));
        }
    }
    segments.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Position reached on each hull: full segments and a partial fraction.
    let mut reached = vec![0usize; hulls.len()];
    let mut partial: Option<(usize, f64)> = None;
    let mut remaining = budget;
    let mut value = 0.0;
    for &(_, i, s) in &segments {
        let mass = inst.items[i].mass;
        let d_rate = hulls[i][s].rate - hulls[i][s - 1].rate;
        let d_score = hulls[i][s].score - hulls[i][s - 1].score;
        let cost = mass * d_rate;
        if cost <= remaining {
            remaining -= cost;
            reached[i] = s;
            value += mass * d_score;
        } else {
            let frac = (remaining / cost).clamp(0.0, 1.0);
            if frac > 0.0 {
                partial = Some((i, frac));
                value += mass * d_score * frac;
            }
            break;
        }
    }
    if !with_alloc {
        return (None, value);
    }
    let mut alloc = Allocation::empty(inst.users.len());
    for (i, item) in inst.items.iter().enumerate() {
        let opts = &inst.classes[item.class].options;
        let k = reached[i];
        let theta = match partial {
            Some((pi, f)) if pi == i => f,
            _ => 0.0,
        };
        for &(u, m) in &item.members {
            if k > 0 {
                alloc.add(u, opts[hulls[i][k].option].triple, m * (1.0 - theta));
            }
            if theta > 0.0 {
                alloc.add(u, opts[hulls[i][k + 1].option].triple, m * theta);
            }
        }
    }
    (Some(alloc), value)
}

/// Best value with `active`, ignoring the fairness constraints.
pub fn relaxed_value(inst: &ProblemInstance, active: &[bool]) -> f64 {
    let (value, rate) = greedy_totals(inst, active);
    if within_budget(inst.total_budget(), rate) {
        value
    } else {
        hull_allocation(inst, active, false).1
    }
}

fn fairness_met(inst: &ProblemInstance, alloc: &Allocation) -> bool {
    let t_min = inst.config.min_serving_time;
    let req = inst.required_served();
    if t_min <= 0.0 || req == 0 {
        return true;
    }
    let served = alloc
        .per_user
        .iter()
        .filter(|row| row.iter().map(|(_, s)| s).sum::<f64>() >= t_min - FEAS_TOL)
        .count();
    served >= req
}

/// Optimal (or, past the size limits, heuristic) allocation for `active`.
pub fn evaluate(inst: &ProblemInstance, active: &[bool], limits: &InnerLimits) -> InnerResult {
    if servable_count(inst, active) < inst.required_served() {
        return InnerResult::infeasible(true);
    }
    let greedy = inst.greedy_allocation(active);
    let budget = inst.total_budget();
    if within_budget(budget, allocation_rate(inst, &greedy)) {
        // Every user already gets the longest possible serving time.
        return InnerResult::feasible(inst, greedy, true);
    }
    if !serving_affordable(inst, active) {
        return InnerResult::infeasible(true);
    }
    if inst.config.variant == Variant::Continuous {
        let (alloc, _) = hull_allocation(inst, active, true);
        let alloc = alloc.expect("allocation requested");
        if fairness_met(inst, &alloc) {
            return InnerResult::feasible(inst, alloc, true);
        }
    }
    let model = InnerModel::build(inst, active);
    if model.lp.vars() <= limits.max_vars
        && let Some(result) = model.solve(inst, limits.max_nodes) {
            return result;
        }
    match repair(inst, active) {
        Some(alloc) => InnerResult::feasible(inst, alloc, false),
        None => InnerResult::infeasible(false),
    }
}

/// Inner program with the fairness indicators, as a mixed-integer program.
struct InnerModel {
    lp: LinearProgram<f64>,
    /// `(user, triple)` per time-share variable.
    shares: Vec<(usize, usize)>,
    integer: Vec<usize>,
    /// Indicators come first in the branching order.
    indicators: usize,
}

impl InnerModel {
    fn build(inst: &ProblemInstance, active: &[bool]) -> Self {
        let binary = inst.config.variant == Variant::Binary;
        let t_min = inst.config.min_serving_time;
        let req = inst.required_served();
        let fairness = t_min > 0.0 && req > 0;

        let mut shares = Vec::new();
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); inst.users.len()];
        for u in 0..inst.users.len() {
            let surv = &inst.demand[u].survival;
            for (i, o) in inst.user_options(u).iter().enumerate() {
                if active[o.triple] && surv[i] > 0.0 {
                    per_user[u].push(shares.len());
                    shares.push((u, o.triple));
                }
            }
        }
        let gammas: Vec<Option<usize>> = (0..inst.users.len())
            .map(|u| (fairness && inst.servable(u, active)).then_some(()))
            .scan(shares.len(), |next, g| {
                Some(g.map(|_| {
                    *next += 1;
                    *next - 1
                }))
            })
            .collect();
        let vars = shares.len() + gammas.iter().flatten().count();
        let mut lp = LinearProgram::new(vars);
        for (v, &(u, t)) in shares.iter().enumerate() {
            lp.objective[v] = inst.score(u, t).unwrap_or(0.0);
        }
        for (u, vars_u) in per_user.iter().enumerate() {
            for (rate, surv) in inst.survival_steps(u) {
                let above: Vec<(usize, f64)> = vars_u
                    .iter()
                    .filter(|&&v| inst.triples[shares[v].1].rate >= rate)
                    .map(|&v| (v, 1.0))
                    .collect();
                if !above.is_empty() {
                    lp.push(above, Sense::Le, surv);
                }
            }
        }
        if let Some(b) = inst.total_budget() {
            let row = shares.iter().enumerate().map(|(v, &(_, t))| (v, inst.triples[t].rate as f64)).collect();
            lp.push(row, Sense::Le, b);
        }
        if fairness {
            let row: Vec<(usize, f64)> = gammas.iter().flatten().map(|&g| (g, 1.0)).collect();
            lp.push(row, Sense::Ge, req as f64);
            for (u, g) in gammas.iter().enumerate() {
                if let Some(g) = *g {
                    let mut row: Vec<(usize, f64)> = per_user[u].iter().map(|&v| (v, 1.0)).collect();
                    row.push((g, -t_min));
                    lp.push(row, Sense::Ge, 0.0);
                    lp.push(vec![(g, 1.0)], Sense::Le, 1.0);
                }
            }
        }
        let mut integer: Vec<usize> = gammas.iter().flatten().copied().collect();
        let indicators = integer.len();
        if binary {
            integer.extend(0..shares.len());
        }
        Self { lp, shares, integer, indicators }
    }

    /// Depth-first branch and bound; `None` when the node limit interrupts
    /// the search before any integral point is found.
    fn solve(&self, inst: &ProblemInstance, max_nodes: usize) -> Option<InnerResult> {
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut stack: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
        let mut nodes = 0;
        let mut complete = true;
        while let Some(fixes) = stack.pop() {
            nodes += 1;
            if nodes > max_nodes {
                complete = false;
                break;
            }
            let mut lp = self.lp.clone();
            for &(v, up) in &fixes {
                if up {
                    lp.push(vec![(v, 1.0)], Sense::Ge, 1.0);
                } else {
                    lp.push(vec![(v, 1.0)], Sense::Le, 0.0);
                }
            }
            let (x, value) = match maximize(&lp) {
                LpOutcome::Optimal { x, value } => (x, value),
                LpOutcome::Infeasible => continue,
                LpOutcome::Unbounded | LpOutcome::IterationLimit => {
                    complete = false;
                    continue;
                }
            };
            if best.as_ref().is_some_and(|(_, b)| value <= b + 1e-9) {
                continue;
            }
            let frac = |&v: &usize| (x[v] - x[v].round()).abs() > 1e-7;
            let branch = self.integer[..self.indicators]
                .iter()
                .find(|v| frac(v))
                .or_else(|| self.integer[self.indicators..].iter().find(|v| frac(v)));
            match branch {
                None => best = Some((x, value)),
                Some(&v) => {
                    let mut down = fixes.clone();
                    down.push((v, false));
                    stack.push(down);
                    let mut up = fixes;
                    up.push((v, true));
                    stack.push(up);
                }
            }
        }
        let binary = inst.config.variant == Variant::Binary;
        match best {
            None if complete => Some(InnerResult::infeasible(true)),
            None => None,
            Some((x, _)) => {
                let mut alloc = Allocation::empty(inst.users.len());
                for (v, &(u, t)) in self.shares.iter().enumerate() {
                    let share = if binary { x[v].round() } else { x[v].min(1.0) };
                    if share > 1e-12 {
                        alloc.add(u, t, share);
                    }
                }
                Some(InnerResult::feasible(inst, alloc, complete))
            }
        }
    }
}

/// Starts from the greedy allocation and shifts time to cheaper
/// representations, or drops it, at the smallest satisfaction loss per kbps
/// until the budget holds. The cheapest users to serve keep their minimum time.
pub fn repair(inst: &ProblemInstance, active: &[bool]) -> Option<Allocation> {
    let budget = inst.total_budget()?;
    let integral = inst.config.variant == Variant::Binary;
    let t_min = inst.config.min_serving_time;
    let req = if t_min > 0.0 { inst.required_served() } else { 0 };
    let n = inst.users.len();

    let mut candidates: Vec<(f64, usize)> = (0..n)
        .filter(|&u| inst.servable(u, active))
        .filter_map(|u| inst.user_options(u).iter().find(|o| active[o.triple]).map(|o| (o.rate as f64, u)))
        .collect();
    if candidates.len() < req {
        return None;
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut protected = vec![false; n];
    for &(_, u) in &candidates[..req] {
        protected[u] = true;
    }

    // Holdings as (option index, share) per user.
    let greedy = inst.greedy_allocation(active);
    let mut hold: Vec<Vec<(usize, f64)>> = greedy
        .per_user
        .iter()
        .enumerate()
        .map(|(u, row)| {
            let opts = inst.user_options(u);
            row.iter().map(|&(t, s)| (opts.iter().position(|o| o.triple == t).expect("in window"), s)).collect()
        })
        .collect();
    let mut overflow = allocation_rate(inst, &greedy) - budget;

    // Cheapest move per user: (ratio, holding index, target option or None).
    type Move = (f64, usize, Option<usize>);
    let best_move = |u: usize, hold: &[(usize, f64)]| -> Option<Move> {
        let opts = inst.user_options(u);
        let serving: f64 = hold.iter().map(|(_, s)| s).sum();
        let mut best: Option<Move> = None;
        for (h, &(a, s)) in hold.iter().enumerate() {
            if s <= 1e-12 {
                continue;
            }
            let oa = &opts[a];
            for (b, ob) in opts.iter().enumerate() {
                if ob.rate >= oa.rate || !active[ob.triple] {
                    continue;
                }
                let ratio = (oa.score - ob.score) / (oa.rate - ob.rate) as f64;
                if best.is_none_or(|m| ratio < m.0) {
                    best = Some((ratio, h, Some(b)));
                }
            }
            let can_drop = !protected[u] || (!integral && serving - t_min > 1e-12);
            if can_drop {
                let ratio = oa.score / oa.rate as f64;
                if best.is_none_or(|m| ratio < m.0) {
                    best = Some((ratio, h, None));
                }
            }
        }
        best
    };
    let mut moves: Vec<Option<Move>> = (0..n).map(|u| best_move(u, &hold[u])).collect();

    while overflow > FEAS_TOL * budget.max(1.0) {
        let pick = moves
            .iter()
            .enumerate()
            .filter_map(|(u, m)| m.map(|m| (u, m)))
            .min_by(|x, y| x.1.0.total_cmp(&y.1.0).then(x.0.cmp(&y.0)));
        let (u, (_, h, target)) = pick?;
        let opts = inst.user_options(u);
        let (a, s) = hold[u][h];
        let ra = opts[a].rate as f64;
        let saved_per_unit = ra - target.map_or(0.0, |b| opts[b].rate as f64);
        let mut amount = if integral { s } else { s.min(overflow / saved_per_unit) };
        if target.is_none() && protected[u] && !integral {
            let serving: f64 = hold[u].iter().map(|(_, x)| x).sum();
            amount = amount.min(serving - t_min);
        }
        hold[u][h].1 -= amount;
        if let Some(b) = target {
            match hold[u].iter_mut().find(|(o, _)| *o == b) {
                Some(entry) => entry.1 += amount,
                None => hold[u].push((b, amount)),
            }
        }
        overflow -= amount * saved_per_unit;
        hold[u].retain(|(_, x)| *x > 1e-12);
        moves[u] = best_move(u, &hold[u]);
    }

    let mut alloc = Allocation::empty(n);
    for (u, row) in hold.iter().enumerate() {
        let opts = inst.user_options(u);
        for &(o, s) in row {
            alloc.add(u, opts[o].triple, s);
        }
    }
    fairness_met(inst, &alloc).then_some(alloc)
}
