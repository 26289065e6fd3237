//! Exact solving of representation-selection instances.
//!
//! The outer search branches on which triples are activated; every leaf
//! solves the time allocation for its active set exactly (or heuristically
//! past the size limits, which is reported in the status).

pub mod inner;
pub mod lagrange;
pub mod lp_format;
pub mod oracle;
pub mod simplex;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{Allocation, ProblemInstance, Solution};

pub use inner::InnerLimits;
pub use lp_format::{export_lp, write_lp};
pub use oracle::oracle_enumerate;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    InternalBb,
    /// Heuristic incumbent only; the model is meant for an external solver.
    ExportOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub gap_tolerance: f64,
    pub backend: Backend,
    /// Deterministic cap on search nodes.
    pub node_limit: Option<u64>,
    /// Cap on inner evaluations spent in the initial local search.
    pub local_search_evals: usize,
    pub inner_max_vars: usize,
    pub inner_max_nodes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit_s: 60.0,
            gap_tolerance: 0.0,
            backend: Backend::InternalBb,
            node_limit: None,
            local_search_evals: 2_000,
            inner_max_vars: InnerLimits::default().max_vars,
            inner_max_nodes: InnerLimits::default().max_nodes,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.time_limit_s > 0.0) {
            return Err(crate::Error::InvalidConfig("time limit must be positive".into()));
        }
        if !(self.gap_tolerance >= 0.0) {
            return Err(crate::Error::InvalidConfig("gap tolerance must be non-negative".into()));
        }
        Ok(())
    }

    fn limits(&self) -> InnerLimits {
        InnerLimits { max_vars: self.inner_max_vars, max_nodes: self.inner_max_nodes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Search finished but some leaves were evaluated heuristically, or the
    /// search was not run.
    FeasibleGap,
    Infeasible,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Option<Solution>,
    pub status: SolveStatus,
    /// Upper bound on the objective.
    pub bound: f64,
    pub nodes_explored: u64,
    pub wall_time_s: f64,
    /// A user that cannot be served, when infeasibility comes from fairness.
    pub witness: Option<u32>,
}

impl SolveReport {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    /// Relative distance between bound and objective.
    pub fn gap(&self) -> Option<f64> {
        self.objective().map(|o| (self.bound - o).max(0.0) / o.abs().max(1.0))
    }
}

pub fn solve(instance: &ProblemInstance, opts: &SolveOptions) -> crate::Result<SolveReport> {
    solve_from(instance, opts, None)
}

/// Like [`solve`], seeding the search with a previous solution; its
/// activated triples and time shares are re-checked against `instance`.
pub fn solve_from(instance: &ProblemInstance, opts: &SolveOptions, warm: Option<&Solution>) -> crate::Result<SolveReport> {
    opts.validate()?;
    let start = Instant::now();
    let mut search = Search::new(instance, opts, start);
    search.seed(warm);
    if opts.backend == Backend::InternalBb {
        search.run();
    } else {
        search.complete = false;
        search.open_bound = search.open_bound.max(search.root_bound());
    }
    Ok(search.finish())
}

const ROOT_DUAL_ITERS: usize = 500;
const NODE_DUAL_ITERS: usize = 30;

struct Incumbent {
    alloc: Allocation,
    value: f64,
}

struct Node {
    pos: usize,
    included: Vec<usize>,
    parent_bound: f64,
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    opts: &'a SolveOptions,
    limits: InnerLimits,
    start: Instant,
    deadline: Duration,
    order: Vec<usize>,
    k: usize,
    incumbent: Option<Incumbent>,
    nodes: u64,
    complete: bool,
    /// Largest bound among subtrees left unexplored or pruned within the gap.
    open_bound: f64,
    /// Leaves whose value might exceed the heuristic one.
    uncertified: bool,
    facility: lagrange::FacilityBound,
}

impl<'a> Search<'a> {
    fn new(inst: &'a ProblemInstance, opts: &'a SolveOptions, start: Instant) -> Self {
        let reach = triple_reach(inst);
        let potential = triple_potential(inst);
        let mut order: Vec<usize> = (0..inst.triples.len()).filter(|&t| reach[t]).collect();
        order.sort_by(|&a, &b| potential[b].total_cmp(&potential[a]).then(a.cmp(&b)));
        Self {
            inst,
            opts,
            limits: opts.limits(),
            start,
            deadline: Duration::from_secs_f64(opts.time_limit_s),
            k: inst.config.max_representations.min(order.len()),
            order,
            incumbent: None,
            nodes: 0,
            complete: true,
            open_bound: f64::NEG_INFINITY,
            uncertified: false,
            facility: lagrange::FacilityBound::new(inst),
        }
    }

    fn mask(&self, triples: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut m = vec![false; self.inst.triples.len()];
        for t in triples {
            m[t] = true;
        }
        m
    }

    fn offer(&mut self, alloc: Allocation, value: f64) {
        if self.incumbent.as_ref().is_none_or(|i| value > i.value + 1e-12) {
            self.incumbent = Some(Incumbent { alloc, value });
        }
    }

    fn evaluate(&mut self, active: &[bool]) -> Option<f64> {
        let r = inner::evaluate(self.inst, active, &self.limits);
        if !r.exact {
            self.uncertified = true;
            self.open_bound = self.open_bound.max(inner::relaxed_value(self.inst, active));
        }
        let value = r.value;
        r.alloc.map(|a| {
            self.offer(a, value);
            value
        })
    }

    fn root_bound(&self) -> f64 {
        let all = self.mask(self.order.iter().copied());
        let (nw, _) = self.nw_bound(&[], &self.order);
        inner::relaxed_value(self.inst, &all).min(nw)
    }

    fn out_of_time(&self) -> bool {
        self.start.elapsed() >= self.deadline || self.opts.node_limit.is_some_and(|n| self.nodes >= n)
    }

    /// Initial incumbents: a warm start, then greedy construction with swaps.
    fn seed(&mut self, warm: Option<&Solution>) {
        if let Some(prev) = warm {
            self.seed_warm(prev);
        }
        let mut active = self.greedy_construct();
        self.repair_fairness(&mut active);
        let mut current = self.evaluate(&active);
        let mut evals = 0;
        'passes: while evals < self.opts.local_search_evals && !self.out_of_time() {
            let chosen: Vec<usize> = self.order.iter().copied().filter(|&t| active[t]).collect();
            let (_, gains) = self.nw_bound(&chosen, &self.order);
            let mut outside: Vec<usize> = self.order.iter().copied().filter(|&t| !active[t]).collect();
            outside.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
            outside.truncate(24);
            let mut inside = chosen.clone();
            inside.reverse();
            inside.truncate(24);
            for &j in &outside {
                for &i in &inside {
                    if evals >= self.opts.local_search_evals || self.out_of_time() {
                        break 'passes;
                    }
                    evals += 1;
                    active[i] = false;
                    active[j] = true;
                    let v = inner::evaluate(self.inst, &active, &self.limits);
                    if v.alloc.is_some() && current.is_none_or(|c| v.value > c + 1e-9 * c.abs().max(1.0)) {
                        if !v.exact {
                            self.uncertified = true;
                        }
                        current = Some(v.value);
                        self.offer(v.alloc.expect("checked"), v.value);
                        continue 'passes;
                    }
                    active[i] = true;
                    active[j] = false;
                }
            }
            break;
        }
    }

    fn seed_warm(&mut self, prev: &Solution) {
        let picked: Vec<usize> = prev.beta.iter().filter_map(|r| self.inst.triple_index(r)).collect();
        if picked.len() <= self.inst.config.max_representations {
            let active = self.mask(picked);
            self.evaluate(&active);
        }
        let ids: std::collections::BTreeMap<u32, usize> =
            self.inst.users.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
        let mut alloc = Allocation::empty(self.inst.users.len());
        for a in &prev.tau {
            let (Some(&u), Some(t)) = (ids.get(&a.user), self.inst.triple_index(&a.representation)) else {
                return;
            };
            alloc.add(u, t, a.share);
        }
        let sol = self.inst.solution_from(&alloc);
        if self.inst.verify(&sol).is_ok() {
            self.offer(alloc, sol.objective);
        }
    }

    /// Lazy greedy on the fairness-free value.
    fn greedy_construct(&self) -> Vec<bool> {
        let mut active = vec![false; self.inst.triples.len()];
        let mut current = 0.0;
        let mut heap: Vec<(f64, usize)> = {
            let (_, gains) = self.nw_bound(&[], &self.order);
            self.order.iter().map(|&t| (gains[t], t)).collect()
        };
        let mut count = 0;
        while count < self.k && !heap.is_empty() {
            heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            let (_, t) = heap.pop().expect("non-empty");
            active[t] = true;
            let gain = inner::relaxed_value(self.inst, &active) - current;
            active[t] = false;
            let next = heap.last().map_or(f64::NEG_INFINITY, |x| x.0);
            if gain >= next - 1e-12 {
                if gain <= 1e-12 {
                    break;
                }
                active[t] = true;
                current += gain;
                count += 1;
            } else {
                heap.push((gain, t));
            }
        }
        active
    }

    /// Adds low-rate triples until enough users can reach the minimum time.
    fn repair_fairness(&self, active: &mut [bool]) {
        let req = self.inst.required_served();
        for _ in 0..=self.k {
            let have = inner::servable_count(self.inst, active);
            if have >= req {
                return;
            }
            let mut best: Option<(usize, usize)> = None;
            let candidates: Vec<usize> = self.order.iter().copied().filter(|&t| !active[t]).collect();
            for j in candidates {
                active[j] = true;
                let c = inner::servable_count(self.inst, active);
                active[j] = false;
                if c > have && best.is_none_or(|b| c > b.0) {
                    best = Some((c, j));
                }
            }
            let Some((_, j)) = best else { return };
            let chosen = active.iter().filter(|a| **a).count();
            if chosen >= self.k {
                // Drop the member whose removal costs least without hurting servability.
                let mut drop: Option<(f64, usize)> = None;
                let base = inner::relaxed_value(self.inst, active);
                let members: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
                for i in members {
                    active[i] = false;
                    let keeps = inner::servable_count(self.inst, active) >= have;
                    let loss = base - inner::relaxed_value(self.inst, active);
                    active[i] = true;
                    if keeps && drop.is_none_or(|d| loss < d.0) {
                        drop = Some((loss, i));
                    }
                }
                let Some((_, i)) = drop else { return };
                active[i] = false;
            }
            active[j] = true;
        }
    }

    /// Submodular bound on the unbudgeted value of any superset of `chosen`
    /// with at most `k` members drawn from `pool`, and the marginal gains.
    fn nw_bound(&self, chosen: &[usize], pool: &[usize]) -> (f64, Vec<f64>) {
        let active = self.mask(chosen.iter().copied());
        let best = self.inst.prefix_best(&active);
        let mut gains = vec![0.0; self.inst.triples.len()];
        let mut base = 0.0;
        for item in &self.inst.items {
            let opts = &self.inst.classes[item.class].options;
            let cur = best[item.class][item.feasible].map_or(0.0, |b| opts[b].score);
            base += item.mass * cur;
            for o in &opts[..item.feasible] {
                if o.score > cur && !active[o.triple] {
                    gains[o.triple] += item.mass * (o.score - cur);
                }
            }
        }
        let mut pool_gains: Vec<f64> = pool.iter().filter(|&&t| !active[t]).map(|&t| gains[t]).collect();
        pool_gains.sort_by(|a, b| b.total_cmp(a));
        let slots = self.k.saturating_sub(chosen.len());
        (base + pool_gains.iter().take(slots).sum::<f64>(), gains)
    }

    fn tolerance(&self) -> f64 {
        let inc = self.incumbent.as_ref().map_or(0.0, |i| i.value);
        self.opts.gap_tolerance * inc.abs().max(1.0) + 1e-9
    }

    fn run(&mut self) {
        let mut stack = vec![Node { pos: 0, included: Vec::new(), parent_bound: f64::INFINITY }];
        let req = self.inst.required_served();
        while let Some(node) = stack.pop() {
            if self.out_of_time() {
                self.complete = false;
                self.open_bound = self.open_bound.max(node.parent_bound);
                for n in &stack {
                    self.open_bound = self.open_bound.max(n.parent_bound);
                }
                break;
            }
            self.nodes += 1;
            let undecided = &self.order[node.pos..];
            let all = self.mask(node.included.iter().chain(undecided).copied());
            if inner::servable_count(self.inst, &all) < req || !inner::serving_affordable(self.inst, &all) {
                continue;
            }
            if node.included.len() == self.k || node.included.len() + undecided.len() <= self.k {
                let leaf = if node.included.len() == self.k { self.mask(node.included.iter().copied()) } else { all };
                self.evaluate(&leaf);
                continue;
            }
            let relaxed = inner::relaxed_value(self.inst, &all);
            let (nw, _) = self.nw_bound(&node.included, undecided);
            let mut bound = relaxed.min(nw).min(node.parent_bound);
            let inc = self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.value);
            if bound > inc + self.tolerance() {
                let fixed = self.mask(node.included.iter().copied());
                let iters = if self.nodes == 1 { ROOT_DUAL_ITERS } else { NODE_DUAL_ITERS };
                let slots = self.k - node.included.len();
                bound = bound.min(self.facility.bound(&fixed, &all, slots, inc + self.tolerance(), iters));
            }
            if bound <= inc + self.tolerance() {
                if bound > inc + 1e-9 {
                    self.open_bound = self.open_bound.max(bound);
                }
                continue;
            }
            let j = self.order[node.pos];
            stack.push(Node { pos: node.pos + 1, included: node.included.clone(), parent_bound: bound });
            if node.included.len() < self.k {
                let mut inc_set = node.included;
                inc_set.push(j);
                stack.push(Node { pos: node.pos + 1, included: inc_set, parent_bound: bound });
            }
        }
    }

    fn finish(self) -> SolveReport {
        let wall = self.start.elapsed().as_secs_f64();
        let witness = self.witness();
        match self.incumbent {
            None => SolveReport {
                solution: None,
                status: if self.complete { SolveStatus::Infeasible } else { SolveStatus::Timeout },
                bound: if self.complete { f64::NEG_INFINITY } else { self.open_bound },
                nodes_explored: self.nodes,
                wall_time_s: wall,
                witness,
            },
            Some(inc) => {
                let solution = self.inst.solution_from(&inc.alloc);
                let bound = self.open_bound.max(solution.objective);
                let status = if !self.complete {
                    if self.opts.backend == Backend::ExportOnly { SolveStatus::FeasibleGap } else { SolveStatus::Timeout }
                } else if self.uncertified
                    && bound - solution.objective > self.opts.gap_tolerance * solution.objective.abs().max(1.0)
                {
                    SolveStatus::FeasibleGap
                } else {
                    SolveStatus::Optimal
                };
                SolveReport {
                    solution: Some(solution),
                    status,
                    bound,
                    nodes_explored: self.nodes,
                    wall_time_s: wall,
                    witness: None,
                }
            }
        }
    }

    fn witness(&self) -> Option<u32> {
        let all = self.mask(0..self.inst.triples.len());
        (0..self.inst.users.len()).find(|&u| !self.inst.servable(u, &all)).map(|u| self.inst.users[u].id)
    }
}

/// Triples some user could play for a positive fraction of time.
fn triple_reach(inst: &ProblemInstance) -> Vec<bool> {
    let mut reach = vec![false; inst.triples.len()];
    for item in &inst.items {
        for o in &inst.classes[item.class].options[..item.feasible] {
            reach[o.triple] = true;
        }
    }
    reach
}

/// Satisfaction-time a triple could deliver if it were the only one active.
fn triple_potential(inst: &ProblemInstance) -> Vec<f64> {
    let mut p = vec![0.0; inst.triples.len()];
    for item in &inst.items {
        for o in &inst.classes[item.class].options[..item.feasible] {
            p[o.triple] += item.mass * o.score;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CandidateUniverse, Representation};
    use crate::model::{ProblemConfig, Switching, build_instance_with};
    use crate::population::{ThroughputModel, UserProfile};
    use crate::qoe::{Kbps, RateBounds, Resolution, SatisfactionTable, VideoType};

    fn toy(caps: &[f64], rates: &[(Kbps, f64)], cfg: ProblemConfig) -> ProblemInstance {
        let users: Vec<UserProfile> = caps
            .iter()
            .enumerate()
            .map(|(i, &c)| UserProfile {
                id: i as u32,
                video: VideoType::Sport,
                display: Resolution::P360,
                throughput: ThroughputModel::scalar(c).unwrap(),
            })
            .collect();
        let universe = CandidateUniverse::from_external(
            rates.iter().map(|&(r, _)| Representation::new(VideoType::Sport, Resolution::P360, r)),
        );
        let overrides =
            rates.iter().map(|&(r, s)| ((VideoType::Sport, Resolution::P360, Resolution::P360, r), s)).collect();
        let cfg = ProblemConfig { switching: Switching::None, ..cfg };
        build_instance_with(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::published(), &cfg, &overrides)
            .unwrap()
    }

    fn strict(k: usize) -> ProblemConfig {
        ProblemConfig {
            cdn_budget_kbps: None,
            max_representations: k,
            served_fraction: 1.0,
            min_serving_time: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_variable() {
        let inst = toy(&[200.0], &[(100, 0.8)], strict(1));
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective().unwrap() - 0.8).abs() < 1e-12);
        assert!((r.bound - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fairness_picks_the_low_rate() {
        let inst = toy(&[500.0, 2000.0], &[(400, 0.7), (1800, 0.95)], strict(1));
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let sol = r.solution.unwrap();
        assert!((sol.objective - 1.4).abs() < 1e-12);
        assert_eq!(sol.beta, vec![Representation::new(VideoType::Sport, Resolution::P360, 400)]);
    }

    #[test]
    fn two_slots_take_both() {
        let inst = toy(&[500.0, 2000.0], &[(400, 0.7), (1800, 0.95)], strict(2));
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        assert!((r.objective().unwrap() - 1.65).abs() < 1e-12);
        assert_eq!(r.solution.unwrap().beta.len(), 2);
    }

    #[test]
    fn infeasible_reports_witness() {
        let inst = toy(&[100.0, 2000.0], &[(400, 0.7)], strict(1));
        let r = solve(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert_eq!(r.witness, Some(0));
        assert!(r.solution.is_none());
    }

    #[test]
    fn warm_start_is_kept_when_better() {
        let inst = toy(&[500.0, 900.0, 2000.0], &[(400, 0.7), (800, 0.8), (1800, 0.95)], strict(2));
        let first = solve(&inst, &SolveOptions::default()).unwrap();
        let again = solve_from(&inst, &SolveOptions::default(), first.solution.as_ref()).unwrap();
        assert!((first.objective().unwrap() - again.objective().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn export_only_reports_gap() {
        let inst = toy(&[500.0, 2000.0], &[(400, 0.7), (1800, 0.95)], strict(1));
        let opts = SolveOptions { backend: Backend::ExportOnly, ..Default::default() };
        let r = solve(&inst, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::FeasibleGap);
        assert!(r.bound >= r.objective().unwrap() - 1e-12);
    }

    #[test]
    fn rejects_bad_options() {
        let inst = toy(&[500.0], &[(400, 0.7)], strict(1));
        assert!(solve(&inst, &SolveOptions { time_limit_s: 0.0, ..Default::default() }).is_err());
        assert!(solve(&inst, &SolveOptions { gap_tolerance: -1.0, ..Default::default() }).is_err());
    }
}
