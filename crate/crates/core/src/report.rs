//! Analytics over solutions: how representations spread over videos and
//! resolutions, how popular each one is, and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::Representation;
use crate::error::{Error, Result};
use crate::experiment::{Experiment, PopulationSource};
use crate::model::Solution;
use crate::qoe::{Resolution, VideoType};
use crate::sim::{Scoring, simulate, synthesize_traces};
use crate::solve::{SolveStatus, solve_from};

pub type Distribution = BTreeMap<(VideoType, Resolution), usize>;

/// Activated representations per (video, resolution), every key present.
pub fn distribution_by_video_and_resolution(beta: &[Representation]) -> Distribution {
    let mut out: Distribution =
        VideoType::ALL.iter().flat_map(|&v| Resolution::ALL.iter().map(move |&r| ((v, r), 0))).collect();
    for rep in beta {
        *out.entry((rep.video, rep.resolution)).or_default() += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityRecord {
    pub representation: Representation,
    /// Users assigned to this representation.
    pub n_l: usize,
    /// Mean users per representation in its (video, resolution) group;
    /// `None` when nobody in the group is assigned.
    pub n_avg: Option<f64>,
    pub relative_popularity: f64,
}

/// Each user's main representation: the largest time share, ties to the
/// lowest rate.
pub fn main_assignments(solution: &Solution) -> BTreeMap<u32, Representation> {
    let mut best: BTreeMap<u32, (f64, Representation)> = BTreeMap::new();
    for a in &solution.tau {
        if a.share <= 0.0 {
            continue;
        }
        let entry = best.entry(a.user).or_insert((a.share, a.representation));
        let better = a.share > entry.0 || (a.share == entry.0 && a.representation.rate < entry.1.rate);
        if better {
            *entry = (a.share, a.representation);
        }
    }
    best.into_iter().map(|(u, (_, rep))| (u, rep)).collect()
}

/// One record per activated representation, in representation order.
pub fn relative_popularity(solution: &Solution) -> Vec<PopularityRecord> {
    let mut users_of: BTreeMap<Representation, usize> = solution.beta.iter().map(|r| (*r, 0)).collect();
    for rep in main_assignments(solution).values() {
        *users_of.entry(*rep).or_default() += 1;
    }
    let mut groups: BTreeMap<(VideoType, Resolution), (usize, usize)> = BTreeMap::new();
    for (rep, n) in &users_of {
        let g = groups.entry((rep.video, rep.resolution)).or_default();
        g.0 += n;
        g.1 += 1;
    }
    users_of
        .iter()
        .map(|(rep, &n_l)| {
            let (n_group, size) = groups[&(rep.video, rep.resolution)];
            let n_avg = (n_group > 0).then(|| n_group as f64 / size as f64);
            PopularityRecord {
                representation: *rep,
                n_l,
                n_avg,
                relative_popularity: n_avg.map_or(0.0, |avg| n_l as f64 / avg),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRange {
    pub video: VideoType,
    pub resolution: Resolution,
    /// Runs in which the group has at least one representation.
    pub runs_present: usize,
    pub mean_min_kbps: f64,
    pub mean_max_kbps: f64,
    /// Mean count over all runs.
    pub mean_count: f64,
}

/// Per (video, resolution) averages of the lowest and highest activated rate
/// and of the count, over the given runs' sets.
pub fn rate_range_summary(runs: &[&[Representation]]) -> Vec<RateRange> {
    let mut acc: BTreeMap<(VideoType, Resolution), (usize, f64, f64, usize)> = BTreeMap::new();
    for set in runs {
        let mut per: BTreeMap<(VideoType, Resolution), (u32, u32, usize)> = BTreeMap::new();
        for rep in *set {
            let e = per.entry((rep.video, rep.resolution)).or_insert((rep.rate, rep.rate, 0));
            e.0 = e.0.min(rep.rate);
            e.1 = e.1.max(rep.rate);
            e.2 += 1;
        }
        for (key, (lo, hi, n)) in per {
            let a = acc.entry(key).or_default();
            a.0 += 1;
            a.1 += lo as f64;
            a.2 += hi as f64;
            a.3 += n;
        }
    }
    let total = runs.len().max(1) as f64;
    acc.into_iter()
        .map(|((video, resolution), (present, lo, hi, n))| RateRange {
            video,
            resolution,
            runs_present: present,
            mean_min_kbps: lo / present as f64,
            mean_max_kbps: hi / present as f64,
            mean_count: n as f64 / total,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[serde(rename = "K")]
    MaxRepresentations,
    #[serde(rename = "C")]
    Budget,
    SportRatioX,
    HdtvRatioY,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepAxis::MaxRepresentations),
            "C" | "c" => Ok(SweepAxis::Budget),
            "sport_ratio_x" | "x" => Ok(SweepAxis::SportRatioX),
            "hdtv_ratio_y" | "y" => Ok(SweepAxis::HdtvRatioY),
            _ => Err(Error::InvalidConfig(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::MaxRepresentations => "K",
            SweepAxis::Budget => "C",
            SweepAxis::SportRatioX => "sport_ratio_x",
            SweepAxis::HdtvRatioY => "hdtv_ratio_y",
        })
    }
}

/// Parses a sweep value; `inf` and `unconstrained` stand for no budget.
pub fn parse_axis_value(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "unconstrained" | "none" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| Error::InvalidConfig(format!("bad sweep value {t:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// Ascending; an infinite budget means unconstrained.
    pub values: Vec<f64>,
    pub runs: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) || self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("sweep values must be strictly increasing".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one run".into()));
        }
        match self.axis {
            SweepAxis::MaxRepresentations if self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0 || v.is_infinite()) => {
                Err(Error::InvalidConfig("K values must be positive integers".into()))
            }
            SweepAxis::Budget if self.values.iter().any(|v| *v <= 0.0) => {
                Err(Error::InvalidConfig("C values must be positive".into()))
            }
            SweepAxis::SportRatioX if self.values.iter().any(|v| !(0.0..=0.8).contains(v)) => {
                Err(Error::InvalidConfig("sport ratio must lie in [0, 0.8]".into()))
            }
            SweepAxis::HdtvRatioY if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                Err(Error::InvalidConfig("HDTV ratio must lie in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub run: usize,
    pub seed: u64,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub objective_per_user: Option<f64>,
    pub bound: f64,
    pub representations: usize,
    pub served_users: usize,
    pub sim_qoe: Option<f64>,
    pub sim_serving_time: Option<f64>,
    pub zero_excess_fraction: Option<f64>,
    pub beta: Vec<Representation>,
    pub popularity: Vec<PopularityRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn apply_axis(exp: &mut Experiment, axis: SweepAxis, value: f64) -> Result<()> {
    match axis {
        SweepAxis::MaxRepresentations => exp.problem.max_representations = value as usize,
        SweepAxis::Budget => exp.problem.cdn_budget_kbps = value.is_finite().then_some(value),
        SweepAxis::SportRatioX | SweepAxis::HdtvRatioY => {
            let PopulationSource::Synthetic(s) = &mut exp.population else {
                return Err(Error::InvalidConfig(format!("axis {axis} needs a synthetic population")));
            };
            *s = if axis == SweepAxis::SportRatioX {
                s.clone().with_sport_ratio(value)
            } else {
                s.clone().with_hdtv_ratio(value)
            };
        }
    }
    Ok(())
}

/// Solves and simulates every (value, run) cell. Along K and C the
/// population is fixed per run and each cell starts from the previous
/// cell's solution; infeasible cells are recorded and the sweep goes on.
pub fn run_sweep(spec: &SweepSpec, base: &Experiment) -> Result<SweepOutcome> {
    spec.validate()?;
    base.validate()?;
    let table = base.table()?;
    let overrides = base.score_overrides()?;
    let scoring = Scoring::new(&table, &overrides);
    let fixed_population = matches!(spec.axis, SweepAxis::MaxRepresentations | SweepAxis::Budget);
    let mut rows = Vec::with_capacity(spec.values.len() * spec.runs);
    for run in 0..spec.runs {
        let seed = spec.seed + run as u64;
        let mut exp = base.clone();
        exp.set_seed(seed);
        let mut warm: Option<Solution> = None;
        for &value in &spec.values {
            apply_axis(&mut exp, spec.axis, value)?;
            let users = exp.users()?;
            let inst = exp.instance(&users)?;
            let report = solve_from(&inst, &exp.solver, if fixed_population { warm.as_ref() } else { None })?;
            let mut row = SweepRow {
                value,
                run,
                seed,
                status: report.status,
                objective: report.objective(),
                objective_per_user: report.solution.as_ref().map(|s| s.objective_per_user),
                bound: report.bound,
                representations: 0,
                served_users: 0,
                sim_qoe: None,
                sim_serving_time: None,
                zero_excess_fraction: None,
                beta: Vec::new(),
                popularity: Vec::new(),
            };
            if let Some(sol) = &report.solution {
                row.representations = sol.beta.len();
                row.served_users = sol.served_users();
                row.beta = sol.beta.clone();
                row.popularity = relative_popularity(sol);
                let traces = synthesize_traces(&users, exp.sim.chunks_per_user, exp.sim.seed)?;
                let sim = simulate(
                    &users,
                    &traces,
                    &sol.representation_set("sweep"),
                    scoring,
                    exp.problem.switching,
                    exp.sim.controller,
                )?;
                row.sim_qoe = Some(sim.average_qoe);
                row.sim_serving_time = Some(sim.average_serving_time);
                row.zero_excess_fraction = Some(sim.zero_excess_fraction());
            }
            if fixed_population
                && let Some(sol) = report.solution {
                    warm = Some(sol);
                }
            rows.push(row);
        }
    }
    Ok(SweepOutcome { axis: spec.axis, rows })
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() { "unconstrained".to_string() } else { v.to_string() }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn status_label(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::FeasibleGap => "feasible_gap",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Timeout => "timeout",
    }
}

impl SweepOutcome {
    pub fn write_sweep_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "axis",
            "value",
            "run",
            "seed",
            "status",
            "objective",
            "objective_per_user",
            "bound",
            "representations",
            "served_users",
            "avg_qoe",
            "serving_time",
            "zero_excess_fraction",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.axis.to_string(),
                fmt_value(r.value),
                r.run.to_string(),
                r.seed.to_string(),
                status_label(r.status).to_string(),
                fmt_opt(r.objective),
                fmt_opt(r.objective_per_user),
                r.bound.to_string(),
                r.representations.to_string(),
                r.served_users.to_string(),
                fmt_opt(r.sim_qoe),
                fmt_opt(r.sim_serving_time),
                fmt_opt(r.zero_excess_fraction),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Counts per (value, run, video, resolution).
    pub fn write_distribution_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["value", "run", "video", "resolution", "count"])?;
        for r in &self.rows {
            for ((video, res), n) in distribution_by_video_and_resolution(&r.beta) {
                w.write_record([fmt_value(r.value), r.run.to_string(), video.to_string(), res.to_string(), n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_popularity_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["value", "run", "video", "resolution", "rate_kbps", "n_l", "n_avg", "relative_popularity"])?;
        for row in &self.rows {
            for r in &row.popularity {
                w.write_record([
                    fmt_value(row.value),
                    row.run.to_string(),
                    r.representation.video.to_string(),
                    r.representation.resolution.to_string(),
                    r.representation.rate.to_string(),
                    r.n_l.to_string(),
                    fmt_opt(r.n_avg),
                    r.relative_popularity.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One block of rate ranges per axis value, averaged over runs.
    pub fn write_rate_ranges_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RATE_RANGE_HEADER)?;
        let mut values: Vec<f64> = self.rows.iter().map(|r| r.value).collect();
        values.dedup();
        for v in values {
            let sets: Vec<&[Representation]> =
                self.rows.iter().filter(|r| r.value == v && r.objective.is_some()).map(|r| r.beta.as_slice()).collect();
            write_rate_rows(&mut w, &fmt_value(v), &rate_range_summary(&sets))?;
        }
        w.flush()?;
        Ok(())
    }
}

const RATE_RANGE_HEADER: [&str; 7] =
    ["value", "video", "resolution", "runs_present", "mean_min_kbps", "mean_max_kbps", "mean_count"];

fn write_rate_rows<W: Write>(w: &mut csv::Writer<W>, value: &str, ranges: &[RateRange]) -> Result<()> {
    for r in ranges {
        w.write_record([
            value.to_string(),
            r.video.to_string(),
            r.resolution.to_string(),
            r.runs_present.to_string(),
            r.mean_min_kbps.to_string(),
            r.mean_max_kbps.to_string(),
            r.mean_count.to_string(),
        ])?;
    }
    Ok(())
}

pub fn write_rate_ranges_csv<W: Write>(writer: W, value: &str, ranges: &[RateRange]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RATE_RANGE_HEADER)?;
    write_rate_rows(&mut w, value, ranges)?;
    w.flush()?;
    Ok(())
}

pub fn write_distribution_csv<W: Write>(writer: W, dist: &Distribution) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["video", "resolution", "count"])?;
    for ((video, res), n) in dist {
        w.write_record([video.to_string(), res.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_popularity_csv<W: Write>(writer: W, records: &[PopularityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["video", "resolution", "rate_kbps", "n_l", "n_avg", "relative_popularity"])?;
    for r in records {
        w.write_record([
            r.representation.video.to_string(),
            r.representation.resolution.to_string(),
            r.representation.rate.to_string(),
            r.n_l.to_string(),
            fmt_opt(r.n_avg),
            r.relative_popularity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-language notes on tendencies seen in a solution. Reported only.
pub fn observations(solution: &Solution) -> Vec<String> {
    let mut notes = Vec::new();
    let pop = relative_popularity(solution);
    if let Some(max) = pop.iter().map(|p| p.relative_popularity).max_by(f64::total_cmp) {
        notes.push(format!("highest relative popularity: {max:.3}"));
    }
    let ranges = rate_range_summary(&[solution.beta.as_slice()]);
    for video in VideoType::ALL {
        let spans: Vec<String> = ranges
            .iter()
            .filter(|r| r.video == video)
            .map(|r| format!("{} {:.0}-{:.0}", r.resolution, r.mean_min_kbps, r.mean_max_kbps))
            .collect();
        if !spans.is_empty() {
            notes.push(format!("{video} rate ranges: {}", spans.join(", ")));
        }
    }
    let dist = distribution_by_video_and_resolution(&solution.beta);
    for video in VideoType::ALL {
        let n: usize = Resolution::ALL.iter().map(|r| dist[&(video, *r)]).sum();
        notes.push(format!("{video}: {n} representations"));
    }
    notes
}
