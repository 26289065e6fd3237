//! A complete run description: population, problem, candidate universe,
//! solver and simulation settings, loadable from one JSON file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{CandidateUniverse, Representation, Vendor, builtin_recommendation};
use crate::error::{Error, Result};
use crate::model::{ProblemConfig, ProblemInstance, ScoreOverride, ScoreOverrides, build_instance_with, collect_overrides};
use crate::population::{
    ScenarioConfig, UserProfile, filter_population, generate_synthetic, ingest_sessions, profiles_from_traces,
};
use crate::qoe::{GridSpec, RateBounds, SatisfactionTable, VideoType, derive_rate_bounds_with, derive_rate_grid};
use crate::sim::Controller;
use crate::solve::SolveOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationSource {
    Synthetic(ScenarioConfig),
    /// Users built from a session trace CSV.
    Traces {
        path: PathBuf,
        users: usize,
        #[serde(default)]
        video_mix: Option<BTreeMap<VideoType, f64>>,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Explicit {
        users: Vec<UserProfile>,
    },
}

fn default_seed() -> u64 {
    1
}

impl Default for PopulationSource {
    fn default() -> Self {
        PopulationSource::Synthetic(ScenarioConfig::default())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseSpec {
    pub grid: GridSpec,
    /// Vendor ladders whose rates are added to the grid.
    pub inject: Vec<Vendor>,
    /// Further triples, exempt from rate bounds.
    pub extra: Vec<Representation>,
    /// Skip the satisfaction grid and use only `inject` and `extra`.
    pub external_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub controller: Controller,
    pub chunks_per_user: usize,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { controller: Controller::IlpController, chunks_per_user: 200, seed: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiment {
    pub population: PopulationSource,
    pub problem: ProblemConfig,
    pub universe: UniverseSpec,
    pub overrides: Vec<ScoreOverride>,
    pub solver: SolveOptions,
    pub sim: SimSettings,
    /// Alternative satisfaction coefficients; the built-in table otherwise.
    pub satisfaction_table: Option<PathBuf>,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let exp: Experiment = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.solver.validate()?;
        self.universe.grid.validate()?;
        if let PopulationSource::Synthetic(s) = &self.population {
            s.validate()?;
        }
        if self.sim.chunks_per_user == 0 {
            return Err(Error::InvalidConfig("chunks per user must be at least 1".into()));
        }
        collect_overrides(&self.overrides)?;
        Ok(())
    }

    /// Sets the population seed where the source has one.
    pub fn set_seed(&mut self, seed: u64) {
        match &mut self.population {
            PopulationSource::Synthetic(s) => s.seed = seed,
            PopulationSource::Traces { seed: s, .. } => *s = seed,
            PopulationSource::Explicit { .. } => {}
        }
        self.sim.seed = seed;
    }

    pub fn table(&self) -> Result<SatisfactionTable<f64>> {
        match &self.satisfaction_table {
            Some(path) => SatisfactionTable::from_path(path),
            None => Ok(SatisfactionTable::builtin()),
        }
    }

    pub fn score_overrides(&self) -> Result<ScoreOverrides> {
        collect_overrides(&self.overrides)
    }

    pub fn users(&self) -> Result<Vec<UserProfile>> {
        match &self.population {
            PopulationSource::Synthetic(s) => generate_synthetic(s),
            PopulationSource::Explicit { users } => Ok(users.clone()),
            PopulationSource::Traces { path, users, video_mix, seed } => {
                let report = ingest_sessions(BufReader::new(File::open(path)?))?;
                let picked = filter_population(report.traces.values(), *users)?;
                let mix = video_mix.clone().unwrap_or_else(|| ScenarioConfig::default().video_mix);
                profiles_from_traces(&picked, &mix, *seed)
            }
        }
    }

    /// Bounds consistent with the grid's satisfaction range.
    pub fn bounds(&self, table: &SatisfactionTable<f64>) -> Result<RateBounds> {
        let g = &self.universe.grid;
        derive_rate_bounds_with(table, g.sat_lo, g.sat_hi, &RateBounds::published())
    }

    pub fn candidate_universe(&self, table: &SatisfactionTable<f64>) -> Result<CandidateUniverse> {
        let mut universe = if self.universe.external_only {
            CandidateUniverse::default()
        } else {
            CandidateUniverse::from_grid(&derive_rate_grid(table, &self.universe.grid)?)
        };
        for vendor in &self.universe.inject {
            for rep in &builtin_recommendation(*vendor) {
                universe.insert(*rep, true);
            }
        }
        for rep in &self.universe.extra {
            universe.insert(*rep, true);
        }
        Ok(universe)
    }

    /// Builds the optimization instance for `users`.
    pub fn instance(&self, users: &[UserProfile]) -> Result<ProblemInstance> {
        let table = self.table()?;
        let universe = self.candidate_universe(&table)?;
        let bounds = self.bounds(&table)?;
        build_instance_with(users, &universe, &table, &bounds, &self.problem, &self.score_overrides()?)
    }

    /// The configuration with derived fields filled in, for echoing.
    pub fn effective(&self) -> Self {
        let mut out = self.clone();
        out.problem = out.problem.effective();
        out
    }
}
