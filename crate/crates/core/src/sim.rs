//! Chunk-level playback of a representation set over per-user traces.

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Representation, RepresentationSet};
use crate::error::{Error, Result};
use crate::model::{ScoreOverrides, Switching};
use crate::population::{SessionTrace, ThroughputModel, UserProfile};
use crate::qoe::SatisfactionTable;

/// Client rate-selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// Best representation that fits under the capacity, outage otherwise.
    IlpController,
    /// Like `IlpController`, but overshoots minimally instead of stalling.
    NoOutage,
}

impl FromStr for Controller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ilp_controller" | "ilp" => Ok(Controller::IlpController),
            "no_outage" => Ok(Controller::NoOutage),
            _ => Err(Error::InvalidConfig(format!("unknown controller {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkOutcome {
    pub chosen: Option<Representation>,
    pub satisfaction: f64,
    /// Relative overshoot of the chosen rate over the capacity.
    pub excess: f64,
    pub served: bool,
}

impl ChunkOutcome {
    fn outage() -> Self {
        Self { chosen: None, satisfaction: 0.0, excess: 0.0, served: false }
    }
}

/// Where scores come from: the fitted table plus literal overrides.
#[derive(Clone, Copy, Debug)]
pub struct Scoring<'a> {
    pub table: &'a SatisfactionTable<f64>,
    pub overrides: &'a ScoreOverrides,
}

impl<'a> Scoring<'a> {
    pub fn new(table: &'a SatisfactionTable<f64>, overrides: &'a ScoreOverrides) -> Self {
        Self { table, overrides }
    }

    fn score(&self, user: &UserProfile, rep: &Representation) -> Result<f64> {
        match self.overrides.get(&(user.video, user.display, rep.resolution, rep.rate)) {
            Some(s) => Ok(*s),
            None => self.table.score(user.video, user.display, rep.resolution, rep.rate),
        }
    }
}

/// The user's playable representations with their scores, by ascending rate.
pub fn window_options(
    user: &UserProfile,
    set: &RepresentationSet,
    scoring: Scoring<'_>,
    switching: Switching,
) -> Result<Vec<(Representation, f64)>> {
    let window = switching.window(user.display);
    let mut out = Vec::new();
    for rep in set.iter().filter(|r| r.video == user.video && window.contains(&r.resolution)) {
        out.push((*rep, scoring.score(user, rep)?));
    }
    out.sort_by(|a, b| a.0.rate.cmp(&b.0.rate).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Picks a representation for one chunk of capacity `capacity`.
/// `options` must be sorted by rate.
pub fn choose(options: &[(Representation, f64)], capacity: f64, controller: Controller) -> ChunkOutcome {
    let mut best: Option<&(Representation, f64)> = None;
    for opt in options.iter().take_while(|o| o.0.rate as f64 <= capacity) {
        if best.is_none_or(|b| opt.1 > b.1) {
            best = Some(opt);
        }
    }
    if let Some((rep, score)) = best {
        return ChunkOutcome { chosen: Some(*rep), satisfaction: *score, excess: 0.0, served: true };
    }
    match (controller, options.first()) {
        (Controller::NoOutage, Some((rep, score))) => {
            let r = rep.rate as f64;
            let excess = ((r - capacity) / r).clamp(0.0, 1.0 - f64::EPSILON);
            ChunkOutcome { chosen: Some(*rep), satisfaction: *score, excess, served: true }
        }
        _ => ChunkOutcome::outage(),
    }
}

/// Plays `trace` chunk by chunk. Fails when the user has nothing to play at
/// all in the set.
pub fn run_session(
    user: &UserProfile,
    trace: &SessionTrace,
    set: &RepresentationSet,
    scoring: Scoring<'_>,
    switching: Switching,
    controller: Controller,
) -> Result<Vec<ChunkOutcome>> {
    if trace.rates_kbps.is_empty() {
        return Err(Error::InvalidConfig(format!("empty trace for user {}", user.id)));
    }
    let options = window_options(user, set, scoring, switching)?;
    if options.is_empty() {
        return Err(Error::UnservableUsers(vec![user.id]));
    }
    Ok(trace.rates_kbps.iter().map(|&c| choose(&options, c, controller)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSim {
    pub user_id: u32,
    pub chunks: usize,
    pub mean_satisfaction: f64,
    pub serving_time: f64,
    pub zero_excess_chunks: usize,
    #[serde(skip)]
    pub excess: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub users: Vec<UserSim>,
    /// Users with no playable representation; left out of the averages.
    pub unservable: Vec<u32>,
    pub average_qoe: f64,
    pub average_serving_time: f64,
    /// Every chunk's excess, sorted ascending.
    #[serde(skip)]
    pub excess: Vec<f64>,
}

/// Aggregates per-user outcomes in the order given.
/// Mean taken as a sum of distinct values weighted by their frequency, so a
/// constant sequence returns its value unchanged.
fn weighted_mean(values: impl Iterator<Item = f64>, n: f64) -> f64 {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(x, _)| x.to_bits() == v.to_bits()) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    counts.iter().map(|&(v, c)| v * (c as f64 / n)).sum()
}

pub fn aggregate(outcomes: &[(u32, Vec<ChunkOutcome>)]) -> SimResult {
    let mut users = Vec::with_capacity(outcomes.len());
    let mut excess = Vec::new();
    for (id, chunks) in outcomes {
        let n = chunks.len().max(1) as f64;
        let user_excess: Vec<f64> = chunks.iter().map(|c| c.excess).collect();
        users.push(UserSim {
            user_id: *id,
            chunks: chunks.len(),
            mean_satisfaction: weighted_mean(chunks.iter().map(|c| c.satisfaction), n),
            serving_time: chunks.iter().filter(|c| c.served && c.excess == 0.0).count() as f64 / n,
            zero_excess_chunks: user_excess.iter().filter(|e| **e == 0.0).count(),
            excess: user_excess.clone(),
        });
        excess.extend(user_excess);
    }
    excess.sort_by(f64::total_cmp);
    let count = users.len().max(1) as f64;
    SimResult {
        average_qoe: users.iter().map(|u| u.mean_satisfaction).sum::<f64>() / count,
        average_serving_time: users.iter().map(|u| u.serving_time).sum::<f64>() / count,
        users,
        unservable: Vec::new(),
        excess,
    }
}

/// Runs every user's session and aggregates. Users with nothing to play are
/// listed in `unservable` rather than failing the run.
pub fn simulate(
    users: &[UserProfile],
    traces: &[SessionTrace],
    set: &RepresentationSet,
    scoring: Scoring<'_>,
    switching: Switching,
    controller: Controller,
) -> Result<SimResult> {
    if users.len() != traces.len() {
        return Err(Error::InvalidConfig(format!("{} users but {} traces", users.len(), traces.len())));
    }
    let mut outcomes = Vec::with_capacity(users.len());
    let mut unservable = Vec::new();
    for (user, trace) in users.iter().zip(traces) {
        match run_session(user, trace, set, scoring, switching, controller) {
            Ok(chunks) => outcomes.push((user.id, chunks)),
            Err(Error::UnservableUsers(ids)) => unservable.extend(ids),
            Err(e) => return Err(e),
        }
    }
    let mut result = aggregate(&outcomes);
    result.unservable = unservable;
    Ok(result)
}

impl SimResult {
    /// Fraction of chunks whose excess is at most `x`.
    pub fn excess_fraction_at(&self, x: f64) -> f64 {
        if self.excess.is_empty() {
            return 1.0;
        }
        self.excess.partition_point(|&e| e <= x) as f64 / self.excess.len() as f64
    }

    pub fn zero_excess_fraction(&self) -> f64 {
        self.excess_fraction_at(0.0)
    }

    /// Empirical CDF at `bins + 1` evenly spaced points over [0, 1].
    pub fn excess_cdf(&self, bins: usize) -> Vec<(f64, f64)> {
        let bins = bins.max(1);
        (0..=bins)
            .map(|i| {
                let x = i as f64 / bins as f64;
                (x, self.excess_fraction_at(x))
            })
            .collect()
    }

    pub fn write_per_user_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "mean_satisfaction", "serving_time"])?;
        for u in &self.users {
            w.write_record([u.user_id.to_string(), u.mean_satisfaction.to_string(), u.serving_time.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_excess_cdf_csv<W: Write>(&self, writer: W, bins: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["excess_bin", "cumulative_fraction"])?;
        for (x, f) in self.excess_cdf(bins) {
            w.write_record([format!("{x:.2}"), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-user chunk traces drawn from each user's throughput model.
pub fn synthesize_traces(users: &[UserProfile], chunks: usize, seed: u64) -> Result<Vec<SessionTrace>> {
    if chunks == 0 {
        return Err(Error::InvalidConfig("chunks per user must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(users
        .iter()
        .map(|u| {
            let rates = match &u.throughput {
                ThroughputModel::Scalar { capacity_kbps } => vec![*capacity_kbps; chunks],
                ThroughputModel::Empirical { samples_kbps } => {
                    (0..chunks).map(|_| samples_kbps[rng.random_range(0..samples_kbps.len())]).collect()
                }
            };
            SessionTrace::from_rates(u.id.to_string(), rates)
        })
        .collect())
}
