//! Optimization instances: decision-variable space, coefficients, constraint
//! families, and evaluation of fixed representation sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{CandidateUniverse, Representation, RepresentationSet};
use crate::error::{Error, Result};
use crate::population::{UserProfile, survival_fraction};
use crate::qoe::{Kbps, RateBounds, Resolution, SatisfactionTable, VideoType};

/// Numerical slack used in feasibility checks.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switching {
    /// Display resolution and its immediate neighbours.
    #[default]
    Adjacent,
    /// Display resolution only.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Time shares are fractions.
    #[default]
    Continuous,
    /// Each user plays one representation all the time or nothing.
    Binary,
}

impl std::str::FromStr for Switching {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjacent" => Ok(Switching::Adjacent),
            "none" => Ok(Switching::None),
            _ => Err(Error::InvalidConfig(format!("unknown switching mode {s:?}"))),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Variant::Continuous),
            "binary" => Ok(Variant::Binary),
            _ => Err(Error::InvalidConfig(format!("unknown variant {s:?}"))),
        }
    }
}

impl Switching {
    pub fn window(self, display: Resolution) -> Vec<Resolution> {
        match self {
            Switching::Adjacent => display.neighbourhood().collect(),
            Switching::None => vec![display],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    /// Average delivery capacity per user; `None` leaves it unconstrained.
    pub cdn_budget_kbps: Option<f64>,
    pub max_representations: usize,
    /// Fraction of users that must be served.
    pub served_fraction: f64,
    /// Minimum fraction of time a served user must be served.
    pub min_serving_time: f64,
    pub switching: Switching,
    pub variant: Variant,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            cdn_budget_kbps: Some(1_000_000.0),
            max_representations: 132,
            served_fraction: 0.9,
            min_serving_time: 0.2,
            switching: Switching::Adjacent,
            variant: Variant::Continuous,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.cdn_budget_kbps
            && !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("CDN budget must be positive, got {c}")));
            }
        if self.max_representations == 0 {
            return Err(Error::InvalidConfig("at least one representation must be allowed".into()));
        }
        if !(0.0..=1.0).contains(&self.served_fraction) {
            return Err(Error::InvalidConfig(format!("served fraction {} outside [0, 1]", self.served_fraction)));
        }
        if !(0.0..=1.0).contains(&self.min_serving_time) {
            return Err(Error::InvalidConfig(format!(
                "minimum serving time {} outside [0, 1]",
                self.min_serving_time
            )));
        }
        Ok(())
    }

    /// The configuration actually solved: the binary variant pins the minimum
    /// serving time to 1.
    pub fn effective(&self) -> Self {
        let mut out = self.clone();
        if out.variant == Variant::Binary {
            out.min_serving_time = 1.0;
        }
        out
    }

    /// Number of users that must be served out of `users`.
    pub fn required_served(&self, users: usize) -> usize {
        let raw = (self.served_fraction * users as f64 - 1e-9).ceil();
        (raw.max(0.0) as usize).min(users)
    }

    /// Total delivery budget for `users`, if any.
    pub fn total_budget(&self, users: usize) -> Option<f64> {
        self.cdn_budget_kbps.map(|c| c * users as f64)
    }
}

/// Scores that replace table lookups for specific (video, display, encoded, rate) classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOverride {
    pub video: VideoType,
    pub display: Resolution,
    pub encoded: Resolution,
    pub rate_kbps: Kbps,
    pub score: f64,
}

pub type ScoreOverrides = BTreeMap<(VideoType, Resolution, Resolution, Kbps), f64>;

pub fn collect_overrides(list: &[ScoreOverride]) -> Result<ScoreOverrides> {
    let mut out = ScoreOverrides::new();
    for o in list {
        if !(0.0..=1.0).contains(&o.score) {
            return Err(Error::InvalidConfig(format!("override score {} outside [0, 1]", o.score)));
        }
        out.insert((o.video, o.display, o.encoded, o.rate_kbps), o.score);
    }
    Ok(out)
}

/// A representation available to one demand class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassOption {
    pub triple: usize,
    pub rate: Kbps,
    pub score: f64,
}

/// Users watching the same video on the same display share their options.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandClass {
    pub video: VideoType,
    pub display: Resolution,
    /// Sorted by (rate, triple).
    pub options: Vec<ClassOption>,
}

impl DemandClass {
    pub fn option_of(&self, triple: usize) -> Option<&ClassOption> {
        self.options.iter().find(|o| o.triple == triple)
    }
}

/// Slice of a user's time during which exactly the first `feasible` class
/// options fit under the throughput.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub feasible: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserDemand {
    pub class: Option<usize>,
    /// Survival at each class option's rate.
    pub survival: Vec<f64>,
    pub levels: Vec<Level>,
}

/// Levels of all users sharing a class and feasible prefix, merged.
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub class: usize,
    pub feasible: usize,
    pub mass: f64,
    pub members: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub users: Vec<UserProfile>,
    pub triples: Vec<Representation>,
    pub external: Vec<bool>,
    pub config: ProblemConfig,
    pub bounds: RateBounds,
    pub classes: Vec<DemandClass>,
    pub demand: Vec<UserDemand>,
    pub items: Vec<Item>,
    /// Users with no admissible representation in their window.
    pub unservable: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableCounts {
    pub tau: usize,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub play_link: usize,
    pub activation_link: usize,
    pub activation_use: usize,
    pub survival: usize,
    pub demand: usize,
    pub budget: usize,
    pub count: usize,
    pub served: usize,
    pub min_time: usize,
}

impl ConstraintCounts {
    pub fn total(&self) -> usize {
        self.play_link
            + self.activation_link
            + self.activation_use
            + self.survival
            + self.demand
            + self.budget
            + self.count
            + self.served
            + self.min_time
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceSummary {
    pub users: usize,
    pub triples: usize,
    pub classes: usize,
    pub unservable_users: Vec<u32>,
    pub variables: VariableCounts,
    pub constraints: ConstraintCounts,
    pub config: ProblemConfig,
}

/// Time shares per user: `(triple index, share)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Allocation {
    pub per_user: Vec<Vec<(usize, f64)>>,
}

impl Allocation {
    pub fn empty(users: usize) -> Self {
        Self { per_user: vec![Vec::new(); users] }
    }

    pub fn add(&mut self, user: usize, triple: usize, share: f64) {
        if share <= 0.0 {
            return;
        }
        let row = &mut self.per_user[user];
        match row.iter_mut().find(|(t, _)| *t == triple) {
            Some(entry) => entry.1 += share,
            None => row.push((triple, share)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub user: u32,
    pub representation: Representation,
    pub share: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub beta: Vec<Representation>,
    pub tau: Vec<Assignment>,
    /// Served flag per user, in instance order.
    pub gamma: Vec<bool>,
    pub objective: f64,
    pub objective_per_user: f64,
    /// Total delivered rate, the left side of the budget constraint.
    pub delivered_kbps: f64,
    pub user_value: Vec<f64>,
    pub user_serving: Vec<f64>,
}

impl Solution {
    pub fn served_users(&self) -> usize {
        self.gamma.iter().filter(|g| **g).count()
    }

    pub fn representation_set(&self, label: &str) -> RepresentationSet {
        RepresentationSet::new(label, self.beta.iter().copied()).expect("solution rates are positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub representations: usize,
    pub max_representations: usize,
    pub count_ok: bool,
    pub delivered_kbps_per_user: f64,
    pub budget_kbps_per_user: Option<f64>,
    pub budget_ok: bool,
    pub served_users: usize,
    pub required_served: usize,
    pub fairness_ok: bool,
}

impl ConstraintReport {
    pub fn feasible(&self) -> bool {
        self.count_ok && self.budget_ok && self.fairness_ok
    }
}

/// A fixed set's greedy solution with its constraint status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub solution: Solution,
    pub constraints: ConstraintReport,
}

pub fn build_instance(
    users: &[UserProfile],
    universe: &CandidateUniverse,
    table: &SatisfactionTable<f64>,
    bounds: &RateBounds,
    cfg: &ProblemConfig,
) -> Result<ProblemInstance> {
    build_instance_with(users, universe, table, bounds, cfg, &ScoreOverrides::new())
}

pub fn build_instance_with(
    users: &[UserProfile],
    universe: &CandidateUniverse,
    table: &SatisfactionTable<f64>,
    bounds: &RateBounds,
    cfg: &ProblemConfig,
    overrides: &ScoreOverrides,
) -> Result<ProblemInstance> {
    cfg.validate()?;
    let config = cfg.effective();
    let admissible: Vec<(Representation, bool)> = universe
        .triples()
        .filter(|(rep, external)| {
            *external
                || bounds.get(rep.video, rep.resolution).is_none()
                || bounds.admits(rep.video, rep.resolution, rep.rate)
        })
        .collect();

    // Classes in (video, display) order.
    let mut keys: Vec<(VideoType, Resolution)> = users.iter().map(|u| (u.video, u.display)).collect();
    keys.sort();
    keys.dedup();
    let mut raw_classes = Vec::with_capacity(keys.len());
    for &(video, display) in &keys {
        let window = config.switching.window(display);
        let mut opts = Vec::new();
        for (rep, _) in admissible.iter().filter(|(r, _)| r.video == video && window.contains(&r.resolution)) {
            let score = match overrides.get(&(video, display, rep.resolution, rep.rate)) {
                Some(s) => *s,
                None => table.score(video, display, rep.resolution, rep.rate)?,
            };
            opts.push((*rep, score));
        }
        raw_classes.push((video, display, opts));
    }

    let mut triples: Vec<Representation> =
        raw_classes.iter().flat_map(|(_, _, opts)| opts.iter().map(|(r, _)| *r)).collect();
    triples.sort();
    triples.dedup();
    let external = triples.iter().map(|r| universe.is_external(r)).collect();
    let index_of = |rep: &Representation| triples.binary_search(rep).expect("demanded triple");

    let classes: Vec<DemandClass> = raw_classes
        .into_iter()
        .map(|(video, display, opts)| {
            let mut options: Vec<ClassOption> = opts
                .iter()
                .map(|(rep, score)| ClassOption { triple: index_of(rep), rate: rep.rate, score: *score })
                .collect();
            options.sort_by_key(|o| (o.rate, o.triple));
            DemandClass { video, display, options }
        })
        .collect();

    let mut demand = Vec::with_capacity(users.len());
    let mut unservable = Vec::new();
    for user in users {
        let class = keys.binary_search(&(user.video, user.display)).expect("class of user");
        let options = &classes[class].options;
        if options.is_empty() {
            unservable.push(user.id);
            demand.push(UserDemand { class: None, survival: Vec::new(), levels: Vec::new() });
            continue;
        }
        let survival: Vec<f64> = options
            .iter()
            .map(|o| {
                let t = survival_fraction(&user.throughput, o.rate as f64);
                match config.variant {
                    Variant::Continuous => t,
                    Variant::Binary => {
                        if t >= 1.0 - 1e-12 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        demand.push(UserDemand { class: Some(class), levels: levels_of(options, &survival), survival });
    }

    let mut merged: BTreeMap<(usize, usize), Item> = BTreeMap::new();
    for (u, d) in demand.iter().enumerate() {
        let Some(class) = d.class else { continue };
        for level in &d.levels {
            let item = merged.entry((class, level.feasible)).or_insert_with(|| Item {
                class,
                feasible: level.feasible,
                mass: 0.0,
                members: Vec::new(),
            });
            item.mass += level.mass;
            item.members.push((u, level.mass));
        }
    }

    Ok(ProblemInstance {
        users: users.to_vec(),
        triples,
        external,
        config,
        bounds: bounds.clone(),
        classes,
        demand,
        items: merged.into_values().collect(),
        unservable,
    })
}

/// Time slices between consecutive distinct option rates.
fn levels_of(options: &[ClassOption], survival: &[f64]) -> Vec<Level> {
    let mut levels = Vec::new();
    let mut i = 0;
    while i < options.len() {
        let mut end = i + 1;
        while end < options.len() && options[end].rate == options[i].rate {
            end += 1;
        }
        let here = survival[i];
        let above = if end < options.len() { survival[end] } else { 0.0 };
        let mass = (here - above).max(0.0);
        if mass > 0.0 {
            levels.push(Level { feasible: end, mass });
        }
        i = end;
    }
    levels
}

impl ProblemInstance {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn required_served(&self) -> usize {
        self.config.required_served(self.users.len())
    }

    pub fn total_budget(&self) -> Option<f64> {
        self.config.total_budget(self.users.len())
    }

    pub fn triple_index(&self, rep: &Representation) -> Option<usize> {
        self.triples.binary_search(rep).ok()
    }

    /// Score of `triple` for `user`, if the triple is in the user's window.
    pub fn score(&self, user: usize, triple: usize) -> Option<f64> {
        let class = self.demand[user].class?;
        self.classes[class].option_of(triple).map(|o| o.score)
    }

    pub fn user_options(&self, user: usize) -> &[ClassOption] {
        match self.demand[user].class {
            Some(c) => &self.classes[c].options,
            None => &[],
        }
    }

    /// Survival at a triple's rate for `user` (after the binary step, if any).
    pub fn survival(&self, user: usize, triple: usize) -> Option<f64> {
        let class = self.demand[user].class?;
        let idx = self.classes[class].options.iter().position(|o| o.triple == triple)?;
        Some(self.demand[user].survival[idx])
    }

    /// Distinct option rates per user, ascending, with their survival.
    pub fn survival_steps(&self, user: usize) -> Vec<(Kbps, f64)> {
        let opts = self.user_options(user);
        let mut out: Vec<(Kbps, f64)> = Vec::new();
        for (o, t) in opts.iter().zip(&self.demand[user].survival) {
            if out.last().is_none_or(|(r, _)| *r != o.rate) {
                out.push((o.rate, *t));
            }
        }
        out
    }

    pub fn active_mask(&self, reps: &[Representation]) -> Vec<bool> {
        let mut mask = vec![false; self.triples.len()];
        for rep in reps {
            if let Some(i) = self.triple_index(rep) {
                mask[i] = true;
            }
        }
        mask
    }

    /// For each class and prefix length, the best active option index
    /// (highest score, lowest rate on ties).
    pub fn prefix_best(&self, active: &[bool]) -> Vec<Vec<Option<usize>>> {
        self.classes
            .iter()
            .map(|class| {
                let mut out = Vec::with_capacity(class.options.len() + 1);
                out.push(None);
                let mut best: Option<usize> = None;
                for (i, o) in class.options.iter().enumerate() {
                    if active[o.triple] && best.is_none_or(|b| o.score > class.options[b].score) {
                        best = Some(i);
                    }
                    out.push(best);
                }
                out
            })
            .collect()
    }

    /// Longest serving time `user` can reach with `active`.
    pub fn max_serving(&self, user: usize, active: &[bool]) -> f64 {
        let d = &self.demand[user];
        let Some(class) = d.class else { return 0.0 };
        let opts = &self.classes[class].options;
        opts.iter().position(|o| active[o.triple]).map(|i| d.survival[i]).unwrap_or(0.0)
    }

    /// Whether `user` can be served for `min_serving_time` with `active`.
    pub fn servable(&self, user: usize, active: &[bool]) -> bool {
        let t_min = self.config.min_serving_time;
        if t_min <= 0.0 {
            return true;
        }
        self.max_serving(user, active) >= t_min - FEAS_TOL
    }

    /// Each time slice goes to the best active representation fitting under it.
    pub fn greedy_allocation(&self, active: &[bool]) -> Allocation {
        let best = self.prefix_best(active);
        let mut alloc = Allocation::empty(self.users.len());
        for (u, d) in self.demand.iter().enumerate() {
            let Some(class) = d.class else { continue };
            let opts = &self.classes[class].options;
            for level in &d.levels {
                if let Some(b) = best[class][level.feasible] {
                    alloc.add(u, opts[b].triple, level.mass);
                }
            }
        }
        alloc
    }

    /// Turns an allocation into a solution; β is the set of triples with positive time.
    pub fn solution_from(&self, alloc: &Allocation) -> Solution {
        let t_min = self.config.min_serving_time;
        let mut used = vec![false; self.triples.len()];
        let mut tau = Vec::new();
        let mut user_value = vec![0.0; self.users.len()];
        let mut user_serving = vec![0.0; self.users.len()];
        let mut delivered = 0.0;
        for (u, row) in alloc.per_user.iter().enumerate() {
            let mut row: Vec<(usize, f64)> = row.iter().copied().filter(|(_, s)| *s > 1e-12).collect();
            row.sort_by_key(|(t, _)| *t);
            for (t, share) in row {
                let score = self.score(u, t).expect("allocation inside window");
                used[t] = true;
                user_value[u] += score * share;
                user_serving[u] += share;
                delivered += self.triples[t].rate as f64 * share;
                tau.push(Assignment { user: self.users[u].id, representation: self.triples[t], share });
            }
        }
        let gamma: Vec<bool> = user_serving.iter().map(|s| t_min <= 0.0 || *s >= t_min - FEAS_TOL).collect();
        let objective: f64 = user_value.iter().sum();
        let n = self.users.len().max(1) as f64;
        Solution {
            beta: self.triples.iter().zip(&used).filter(|(_, u)| **u).map(|(r, _)| *r).collect(),
            tau,
            gamma,
            objective,
            objective_per_user: objective / n,
            delivered_kbps: delivered,
            user_value,
            user_serving,
        }
    }

    /// C, K and fairness status of `solution` under this instance's config.
    pub fn check(&self, solution: &Solution) -> ConstraintReport {
        let n = self.users.len();
        let per_user = if n == 0 { 0.0 } else { solution.delivered_kbps / n as f64 };
        let budget_ok = self.total_budget().is_none_or(|b| solution.delivered_kbps <= b * (1.0 + FEAS_TOL) + FEAS_TOL);
        let served = solution.served_users();
        let required = self.required_served();
        ConstraintReport {
            representations: solution.beta.len(),
            max_representations: self.config.max_representations,
            count_ok: solution.beta.len() <= self.config.max_representations,
            delivered_kbps_per_user: per_user,
            budget_kbps_per_user: self.config.cdn_budget_kbps,
            budget_ok,
            served_users: served,
            required_served: required,
            fairness_ok: served >= required,
        }
    }

    /// Full constraint check of a solution; returns the first violation.
    pub fn verify(&self, solution: &Solution) -> std::result::Result<(), String> {
        let report = self.check(solution);
        if !report.feasible() {
            return Err(format!("constraint report {report:?}"));
        }
        let index: BTreeMap<u32, usize> = self.users.iter().enumerate().map(|(i, u)| (u.id, i)).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.users.len()];
        for a in &solution.tau {
            let u = *index.get(&a.user).ok_or(format!("unknown user {}", a.user))?;
            let t = self.triple_index(&a.representation).ok_or(format!("{} not in instance", a.representation))?;
            if !solution.beta.contains(&a.representation) {
                return Err(format!("{} played but not active", a.representation));
            }
            if self.score(u, t).is_none() {
                return Err(format!("{} outside the window of user {}", a.representation, a.user));
            }
            if !(a.share > 0.0 && a.share <= 1.0 + FEAS_TOL) {
                return Err(format!("share {} out of range", a.share));
            }
            if self.config.variant == Variant::Binary && (a.share - 1.0).abs() > 1e-9 {
                return Err(format!("fractional share {} in binary variant", a.share));
            }
            rows[u].push((t, a.share));
        }
        for rep in &solution.beta {
            if self.triple_index(rep).is_none() {
                return Err(format!("{rep} not in instance"));
            }
        }
        for (u, row) in rows.iter().enumerate() {
            let total: f64 = row.iter().map(|(_, s)| s).sum();
            if total > 1.0 + 1e-9 {
                return Err(format!("user {} plays {total} of the time", self.users[u].id));
            }
            for (rate, t) in self.survival_steps(u) {
                let above: f64 = row.iter().filter(|(tr, _)| self.triples[*tr].rate >= rate).map(|(_, s)| s).sum();
                if above > t + 1e-9 {
                    return Err(format!("user {} exceeds survival {t} at {rate} kbps ({above})", self.users[u].id));
                }
            }
            let served = total >= self.config.min_serving_time - FEAS_TOL || self.config.min_serving_time <= 0.0;
            if solution.gamma[u] && !served {
                return Err(format!("user {} marked served with {total}", self.users[u].id));
            }
        }
        Ok(())
    }

    pub fn variable_count(&self) -> VariableCounts {
        let tau: usize = self.demand.iter().filter_map(|d| d.class).map(|c| self.classes[c].options.len()).sum();
        VariableCounts { tau, alpha: tau, beta: self.triples.len(), gamma: self.users.len() }
    }

    pub fn constraint_count(&self) -> ConstraintCounts {
        let vars = self.variable_count();
        let survival: usize = (0..self.users.len()).map(|u| self.survival_steps(u).len()).sum();
        let demand = self.demand.iter().filter(|d| d.class.is_some()).count();
        ConstraintCounts {
            play_link: vars.tau,
            activation_link: vars.alpha,
            activation_use: vars.beta,
            survival,
            demand,
            budget: usize::from(self.config.cdn_budget_kbps.is_some()),
            count: 1,
            served: 1,
            min_time: self.users.len(),
        }
    }

    pub fn summary(&self) -> InstanceSummary {
        InstanceSummary {
            users: self.users.len(),
            triples: self.triples.len(),
            classes: self.classes.len(),
            unservable_users: self.unservable.clone(),
            variables: self.variable_count(),
            constraints: self.constraint_count(),
            config: self.config.clone(),
        }
    }

    /// Greedy solution with `active` as the activated triples.
    pub fn evaluate_active(&self, active: &[bool]) -> Evaluation {
        let solution = self.solution_from(&self.greedy_allocation(active));
        let mut constraints = self.check(&solution);
        let count = active.iter().filter(|a| **a).count();
        constraints.representations = count;
        constraints.count_ok = count <= self.config.max_representations;
        Evaluation { solution, constraints }
    }
}

/// Evaluates a fixed representation set on `users`: every triple of the set
/// is active regardless of rate bounds, and each user's time is allocated
/// greedily. C and K are reported, not enforced.
pub fn evaluate_fixed_set(
    users: &[UserProfile],
    set: &RepresentationSet,
    table: &SatisfactionTable<f64>,
    cfg: &ProblemConfig,
) -> Result<Evaluation> {
    evaluate_fixed_set_with(users, set, table, cfg, &ScoreOverrides::new())
}

pub fn evaluate_fixed_set_with(
    users: &[UserProfile],
    set: &RepresentationSet,
    table: &SatisfactionTable<f64>,
    cfg: &ProblemConfig,
    overrides: &ScoreOverrides,
) -> Result<Evaluation> {
    let universe = CandidateUniverse::from_external(set.iter().copied());
    let instance = build_instance_with(users, &universe, table, &RateBounds::default(), cfg, overrides)?;
    let active = vec![true; instance.triples.len()];
    let mut eval = instance.evaluate_active(&active);
    eval.constraints.representations = set.len();
    eval.constraints.count_ok = set.len() <= instance.config.max_representations;
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Vendor, builtin_recommendation};
    use crate::population::ThroughputModel;

    fn user(id: u32, video: VideoType, display: Resolution, model: ThroughputModel) -> UserProfile {
        UserProfile { id, video, display, throughput: model }
    }

    fn scalar(c: f64) -> ThroughputModel {
        ThroughputModel::scalar(c).unwrap()
    }

    fn toy_overrides(pairs: &[(Kbps, f64)]) -> ScoreOverrides {
        pairs
            .iter()
            .map(|&(r, s)| ((VideoType::Sport, Resolution::P360, Resolution::P360, r), s))
            .collect()
    }

    fn one_class_instance(users: Vec<UserProfile>, rates: &[Kbps], scores: &[(Kbps, f64)], cfg: ProblemConfig) -> ProblemInstance {
        let universe = CandidateUniverse::from_external(
            rates.iter().map(|&r| Representation::new(VideoType::Sport, Resolution::P360, r)),
        );
        let cfg = ProblemConfig { switching: Switching::None, ..cfg };
        build_instance_with(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::published(), &cfg, &toy_overrides(scores))
            .unwrap()
    }

    fn lax() -> ProblemConfig {
        ProblemConfig { cdn_budget_kbps: None, served_fraction: 0.0, min_serving_time: 0.0, ..Default::default() }
    }

    #[test]
    fn defaults_validate() {
        let cfg = ProblemConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.max_representations, 132);
        assert_eq!(cfg.required_served(500), 450);
        assert_eq!(cfg.required_served(7), 7);
    }

    #[test]
    fn binary_forces_full_time() {
        let cfg = ProblemConfig { variant: Variant::Binary, ..Default::default() };
        assert_eq!(cfg.effective().min_serving_time, 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            ProblemConfig { max_representations: 0, ..Default::default() },
            ProblemConfig { served_fraction: 1.5, ..Default::default() },
            ProblemConfig { min_serving_time: -0.1, ..Default::default() },
            ProblemConfig { cdn_budget_kbps: Some(0.0), ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn single_variable_instance() {
        let cfg = ProblemConfig {
            cdn_budget_kbps: None,
            max_representations: 1,
            served_fraction: 1.0,
            min_serving_time: 1.0,
            ..Default::default()
        };
        let inst = one_class_instance(
            vec![user(0, VideoType::Sport, Resolution::P360, scalar(200.0))],
            &[100],
            &[(100, 0.8)],
            cfg,
        );
        assert_eq!(inst.variable_count(), VariableCounts { tau: 1, alpha: 1, beta: 1, gamma: 1 });
        let eval = inst.evaluate_active(&[true]);
        assert!((eval.solution.objective - 0.8).abs() < 1e-12);
        assert!(eval.constraints.feasible());
        inst.verify(&eval.solution).unwrap();
    }

    #[test]
    fn adjacent_window_is_clipped() {
        let users = [user(0, VideoType::Cartoon, Resolution::P224, scalar(5000.0))];
        let universe = CandidateUniverse::from_external(
            Resolution::ALL.iter().map(|&r| Representation::new(VideoType::Cartoon, r, 300)),
        );
        let inst = build_instance(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::published(), &ProblemConfig::default())
            .unwrap();
        let res: Vec<Resolution> = inst.user_options(0).iter().map(|o| inst.triples[o.triple].resolution).collect();
        assert_eq!(res, [Resolution::P224, Resolution::P360]);
    }

    #[test]
    fn beta_count_is_per_triple() {
        let one = one_class_instance(vec![user(0, VideoType::Sport, Resolution::P360, scalar(900.0))], &[500, 800], &[], lax());
        let two = one_class_instance(
            vec![
                user(0, VideoType::Sport, Resolution::P360, scalar(900.0)),
                user(1, VideoType::Sport, Resolution::P360, scalar(300.0)),
            ],
            &[500, 800],
            &[],
            lax(),
        );
        assert_eq!(one.variable_count().beta, two.variable_count().beta);
        assert_eq!(two.variable_count().tau, 4);
    }

    #[test]
    fn no_switching_has_fewer_variables() {
        let users = [
            user(0, VideoType::Movie, Resolution::P720, scalar(3000.0)),
            user(1, VideoType::Movie, Resolution::P224, scalar(900.0)),
        ];
        let universe = CandidateUniverse::from_grid(
            &crate::qoe::derive_rate_grid(&SatisfactionTable::<f64>::builtin(), &Default::default()).unwrap(),
        );
        let table = SatisfactionTable::builtin();
        let bounds = RateBounds::published();
        let adj = build_instance(&users, &universe, &table, &bounds, &ProblemConfig::default()).unwrap();
        let none = build_instance(
            &users,
            &universe,
            &table,
            &bounds,
            &ProblemConfig { switching: Switching::None, ..Default::default() },
        )
        .unwrap();
        assert!(none.variable_count().tau < adj.variable_count().tau);
    }

    #[test]
    fn rate_bounds_eliminate_grid_rates_but_not_external() {
        let users = [user(0, VideoType::Sport, Resolution::P224, scalar(5000.0))];
        let mut universe = CandidateUniverse::default();
        universe.insert(Representation::new(VideoType::Sport, Resolution::P224, 100), false);
        universe.insert(Representation::new(VideoType::Sport, Resolution::P224, 150), true);
        universe.insert(Representation::new(VideoType::Sport, Resolution::P224, 400), false);
        let cfg = ProblemConfig { switching: Switching::None, ..Default::default() };
        let inst = build_instance(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::published(), &cfg).unwrap();
        let rates: Vec<Kbps> = inst.triples.iter().map(|r| r.rate).collect();
        assert_eq!(rates, [150, 400]);
    }

    #[test]
    fn unservable_users_are_listed() {
        let users = [
            user(3, VideoType::Sport, Resolution::P1080, scalar(5000.0)),
            user(4, VideoType::Sport, Resolution::P360, scalar(5000.0)),
        ];
        let universe = CandidateUniverse::from_external([Representation::new(VideoType::Sport, Resolution::P360, 500)]);
        let cfg = ProblemConfig { switching: Switching::None, ..Default::default() };
        let inst = build_instance(&users, &universe, &SatisfactionTable::builtin(), &RateBounds::published(), &cfg).unwrap();
        assert_eq!(inst.unservable, vec![3]);
    }

    #[test]
    fn fixed_set_single_rep() {
        let inst = one_class_instance(
            vec![user(0, VideoType::Sport, Resolution::P360, scalar(200.0))],
            &[100],
            &[(100, 0.8)],
            lax(),
        );
        let eval = inst.evaluate_active(&[true]);
        assert!((eval.solution.objective - 0.8).abs() < 1e-12);
        assert!((eval.solution.user_serving[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_set_two_slices() {
        let model = ThroughputModel::empirical(vec![150.0, 150.0, 300.0, 300.0]).unwrap();
        let inst = one_class_instance(
            vec![user(0, VideoType::Sport, Resolution::P360, model)],
            &[100, 200],
            &[(100, 0.6), (200, 0.9)],
            lax(),
        );
        let eval = inst.evaluate_active(&[true, true]);
        let shares: Vec<f64> = eval.solution.tau.iter().map(|a| a.share).collect();
        assert_eq!(shares, [0.5, 0.5]);
        assert!((eval.solution.objective - (0.5 * 0.6 + 0.5 * 0.9)).abs() < 1e-12);
        inst.verify(&eval.solution).unwrap();
    }

    #[test]
    fn apple_set_outage_for_slow_user() {
        let users = [user(0, VideoType::Documentary, Resolution::P224, scalar(120.0))];
        let eval = evaluate_fixed_set(&users, &builtin_recommendation(Vendor::Apple), &SatisfactionTable::builtin(), &lax())
            .unwrap();
        assert_eq!(eval.solution.objective, 0.0);
        assert_eq!(eval.solution.user_serving[0], 0.0);
        assert_eq!(eval.constraints.representations, 40);
    }

    #[test]
    fn fixed_set_reports_count_violation() {
        let users = [user(0, VideoType::Documentary, Resolution::P720, scalar(3000.0))];
        let cfg = ProblemConfig { max_representations: 10, ..lax() };
        let eval =
            evaluate_fixed_set(&users, &builtin_recommendation(Vendor::Apple), &SatisfactionTable::builtin(), &cfg).unwrap();
        assert!(!eval.constraints.count_ok);
        assert!(eval.solution.objective > 0.0);
    }

    #[test]
    fn greedy_ties_pick_lowest_rate() {
        let inst = one_class_instance(
            vec![user(0, VideoType::Sport, Resolution::P360, scalar(1000.0))],
            &[300, 600],
            &[(300, 0.7), (600, 0.7)],
            lax(),
        );
        let eval = inst.evaluate_active(&[true, true]);
        assert_eq!(eval.solution.beta, vec![Representation::new(VideoType::Sport, Resolution::P360, 300)]);
    }

    #[test]
    fn binary_variant_uses_step_survival() {
        let model = ThroughputModel::empirical(vec![400.0, 900.0]).unwrap();
        let cfg = ProblemConfig { variant: Variant::Binary, ..lax() };
        let inst = one_class_instance(vec![user(0, VideoType::Sport, Resolution::P360, model)], &[300, 600], &[], cfg);
        let steps = inst.survival_steps(0);
        assert_eq!(steps, vec![(300, 1.0), (600, 0.0)]);
        let eval = inst.evaluate_active(&[true, true]);
        assert_eq!(eval.solution.tau.len(), 1);
        assert_eq!(eval.solution.tau[0].share, 1.0);
    }

    #[test]
    fn constraint_counts() {
        let model = ThroughputModel::empirical(vec![400.0, 900.0]).unwrap();
        let inst = one_class_instance(vec![user(0, VideoType::Sport, Resolution::P360, model)], &[300, 600], &[], lax());
        let c = inst.constraint_count();
        assert_eq!(c.survival, 2);
        assert_eq!(c.budget, 0);
        assert_eq!(c.total(), (2 + 2 + 2 + 2 + 1) + 1 + 1 + 1);
    }
}
