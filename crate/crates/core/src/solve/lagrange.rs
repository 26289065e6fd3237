//! Lagrangian bound on the budget- and fairness-free value.
//!
//! Each item (a time slice shared by users of one class) takes the best
//! active option in its feasible prefix, so the value is a facility-location
//! objective. Relaxing the linking rows `x[i][t] <= y[t]` with multipliers
//! `mu >= 0` splits the problem into a per-item choice and a top-k pick of
//! triples; subgradient steps on `mu` tighten the bound towards the linear
//! relaxation.

use crate::model::ProblemInstance;

pub struct FacilityBound {
    /// Per item: (triple, mass * score) for the options it can play.
    cols: Vec<Vec<(usize, f64)>>,
    /// Per item and option: delivered rate as a share of the budget.
    costs: Vec<Vec<f64>>,
    budgeted: bool,
    mu: Vec<Vec<f64>>,
    /// Multiplier of the budget row.
    lambda: f64,
    triples: usize,
    load: Vec<f64>,
    y: Vec<bool>,
    pick: Vec<Option<usize>>,
}

impl FacilityBound {
    pub fn new(inst: &ProblemInstance) -> Self {
        let cols: Vec<Vec<(usize, f64)>> = inst
            .items
            .iter()
            .map(|item| {
                inst.classes[item.class].options[..item.feasible]
                    .iter()
                    .map(|o| (o.triple, item.mass * o.score))
                    .collect()
            })
            .collect();
        let budget = inst.total_budget();
        let costs = inst
            .items
            .iter()
            .map(|item| {
                inst.classes[item.class].options[..item.feasible]
                    .iter()
                    .map(|o| budget.map_or(0.0, |b| item.mass * o.rate as f64 / b))
                    .collect()
            })
            .collect();
        let mu = cols.iter().map(|c| vec![0.0; c.len()]).collect();
        let triples = inst.triples.len();
        Self {
            mu,
            costs,
            budgeted: budget.is_some(),
            lambda: 0.0,
            pick: vec![None; cols.len()],
            cols,
            triples,
            load: vec![0.0; triples],
            y: vec![false; triples],
        }
    }

    /// Evaluates the dual function at the current multipliers; fills the
    /// primal picks used for the subgradient.
    fn dual(&mut self, included: &[bool], avail: &[bool], slots: usize) -> f64 {
        let mut value = self.lambda;
        self.load.iter_mut().for_each(|l| *l = 0.0);
        for (i, col) in self.cols.iter().enumerate() {
            let mut best = 0.0;
            let mut pick = None;
            for (k, &(t, w)) in col.iter().enumerate() {
                if !avail[t] {
                    continue;
                }
                let m = self.mu[i][k];
                self.load[t] += m;
                let r = w - m - self.lambda * self.costs[i][k];
                if r > best {
                    best = r;
                    pick = Some(k);
                }
            }
            value += best;
            self.pick[i] = pick;
        }
        let mut open: Vec<(f64, usize)> = Vec::new();
        for t in 0..self.triples {
            self.y[t] = included[t];
            if included[t] {
                value += self.load[t];
            } else if avail[t] && self.load[t] > 0.0 {
                open.push((self.load[t], t));
            }
        }
        open.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(l, t) in open.iter().take(slots) {
            value += l;
            self.y[t] = true;
        }
        value
    }

    /// Upper bound on the value of any set containing `included`, drawn from
    /// `avail`, with `slots` more members. Stops early once the bound drops
    /// to `target`.
    pub fn bound(&mut self, included: &[bool], avail: &[bool], slots: usize, target: f64, iters: usize) -> f64 {
        let mut best = f64::INFINITY;
        let mut best_mu = self.mu.clone();
        let mut best_lambda = self.lambda;
        let mut theta = 1.0;
        let mut stall = 0;
        for _ in 0..iters.max(1) {
            let value = self.dual(included, avail, slots);
            if value < best - 1e-9 {
                best = value;
                best_mu.clone_from(&self.mu);
                best_lambda = self.lambda;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 4 {
                    theta *= 0.5;
                    stall = 0;
                    self.mu.clone_from(&best_mu);
                    self.lambda = best_lambda;
                    continue;
                }
            }
            if best <= target || theta < 1e-6 {
                break;
            }
            let g_budget = if self.budgeted {
                1.0 - self.pick.iter().enumerate().map(|(i, p)| p.map_or(0.0, |k| self.costs[i][k])).sum::<f64>()
            } else {
                0.0
            };
            let mut norm = g_budget * g_budget;
            for (i, col) in self.cols.iter().enumerate() {
                for (k, &(t, _)) in col.iter().enumerate() {
                    if avail[t] {
                        let g = f64::from(self.y[t]) - f64::from(self.pick[i] == Some(k));
                        norm += g * g;
                    }
                }
            }
            if norm == 0.0 {
                break;
            }
            let aim = if target > 0.0 && target < value { target } else { 0.95 * value };
            let step = theta * (value - aim).max(1e-9) / norm;
            self.lambda = (self.lambda - step * g_budget).max(0.0);
            for (i, col) in self.cols.iter().enumerate() {
                for (k, &(t, _)) in col.iter().enumerate() {
                    if avail[t] {
                        let g = f64::from(self.y[t]) - f64::from(self.pick[i] == Some(k));
                        let m = &mut self.mu[i][k];
                        *m = (*m - step * g).max(0.0);
                    }
                }
            }
        }
        self.mu = best_mu;
        self.lambda = best_lambda;
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CandidateUniverse, Representation};
    use crate::model::{ProblemConfig, Switching, build_instance_with};
    use crate::population::{ThroughputModel, UserProfile};
    use crate::qoe::{RateBounds, Resolution, SatisfactionTable, VideoType};
    use crate::solve::inner;
    use crate::solve::simplex::{LinearProgram, LpOutcome, Sense, maximize};

    fn instance(caps: &[f64], rates: &[u32], k: usize, budget: Option<f64>) -> ProblemInstance {
        let users: Vec<UserProfile> = caps
            .iter()
            .enumerate()
            .map(|(i, &c)| UserProfile {
                id: i as u32,
                video: VideoType::Cartoon,
                display: if i % 2 == 0 { Resolution::P360 } else { Resolution::P720 },
                throughput: ThroughputModel::scalar(c).unwrap(),
            })
            .collect();
        let universe = CandidateUniverse::from_external(rates.iter().flat_map(|&r| {
            [Representation::new(VideoType::Cartoon, Resolution::P360, r), Representation::new(VideoType::Cartoon, Resolution::P720, r)]
        }));
        let cfg = ProblemConfig {
            cdn_budget_kbps: budget,
            max_representations: k,
            served_fraction: 0.0,
            switching: Switching::Adjacent,
            ..Default::default()
        };
        build_instance_with(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::default(), &cfg, &Default::default())
            .unwrap()
    }

    /// Linear relaxation solved directly.
    fn lp_value(inst: &ProblemInstance, k: usize) -> f64 {
        let m = inst.triples.len();
        let mut vars = Vec::new();
        for (i, item) in inst.items.iter().enumerate() {
            for o in &inst.classes[item.class].options[..item.feasible] {
                vars.push((i, o.triple, item.mass * o.score));
            }
        }
        let mut lp = LinearProgram::<f64>::new(m + vars.len());
        for (v, &(_, _, w)) in vars.iter().enumerate() {
            lp.objective[m + v] = w;
        }
        for t in 0..m {
            lp.push(vec![(t, 1.0)], Sense::Le, 1.0);
        }
        lp.push((0..m).map(|t| (t, 1.0)).collect(), Sense::Le, k as f64);
        for i in 0..inst.items.len() {
            let row: Vec<(usize, f64)> =
                vars.iter().enumerate().filter(|(_, x)| x.0 == i).map(|(v, _)| (m + v, 1.0)).collect();
            lp.push(row, Sense::Le, 1.0);
        }
        for (v, &(_, t, _)) in vars.iter().enumerate() {
            lp.push(vec![(m + v, 1.0), (t, -1.0)], Sense::Le, 0.0);
        }
        if let Some(b) = inst.total_budget() {
            let row = vars
                .iter()
                .enumerate()
                .map(|(v, &(i, t, _))| (m + v, inst.items[i].mass * inst.triples[t].rate as f64))
                .collect();
            lp.push(row, Sense::Le, b);
        }
        match maximize(&lp) {
            LpOutcome::Optimal { value, .. } => value,
            other => panic!("{other:?}"),
        }
    }

    fn best_subset(inst: &ProblemInstance, k: usize) -> f64 {
        let m = inst.triples.len();
        (0u32..1 << m)
            .filter(|s| s.count_ones() as usize <= k)
            .map(|s| {
                let active: Vec<bool> = (0..m).map(|t| s & (1 << t) != 0).collect();
                inner::relaxed_value(inst, &active)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn bound_dominates_optimum_and_approaches_relaxation() {
        let caps = [350.0, 500.0, 800.0, 1200.0, 2000.0, 2600.0, 3100.0, 900.0];
        let rates = [300, 450, 700, 1100, 1900];
        for k in 1..=4 {
            let inst = instance(&caps, &rates, k, None);
            let m = inst.triples.len();
            let mut fb = FacilityBound::new(&inst);
            let b = fb.bound(&vec![false; m], &vec![true; m], k, f64::NEG_INFINITY, 3000);
            let opt = best_subset(&inst, k);
            let lp = lp_value(&inst, k);
            assert!(b >= opt - 1e-9, "k={k}: {b} < {opt}");
            assert!(b >= lp - 1e-7, "k={k}: {b} < {lp}");
            assert!(b <= lp * 1.01 + 1e-9, "k={k}: {b} vs {lp}");
        }
    }

    #[test]
    fn fixed_members_are_respected() {
        let caps = [350.0, 800.0, 2000.0, 3100.0];
        let inst = instance(&caps, &[300, 700, 1900], 2, None);
        let m = inst.triples.len();
        let mut included = vec![false; m];
        included[0] = true;
        let mut fb = FacilityBound::new(&inst);
        let b = fb.bound(&included, &vec![true; m], 1, f64::NEG_INFINITY, 2000);
        let best = (1..m)
            .map(|t| {
                let mut a = included.clone();
                a[t] = true;
                inner::relaxed_value(&inst, &a)
            })
            .fold(0.0, f64::max);
        assert!(b >= best - 1e-9);
    }

    #[test]
    fn budget_multiplier_reaches_budgeted_relaxation() {
        let caps = [350.0, 500.0, 800.0, 1200.0, 2000.0, 2600.0, 3100.0, 900.0];
        let rates = [300, 450, 700, 1100, 1900];
        for (k, c) in [(2, 250.0), (3, 350.0), (4, 500.0)] {
            let inst = instance(&caps, &rates, k, Some(c));
            let m = inst.triples.len();
            let mut fb = FacilityBound::new(&inst);
            let b = fb.bound(&vec![false; m], &vec![true; m], k, f64::NEG_INFINITY, 5000);
            let lp = lp_value(&inst, k);
            let unbudgeted = lp_value(&instance(&caps, &rates, k, None), k);
            assert!(lp < unbudgeted - 1e-6);
            assert!(b >= lp - 1e-7, "k={k}: {b} < {lp}");
            assert!(b <= lp * 1.01 + 1e-9, "k={k}: {b} vs {lp}");
        }
    }
}
