use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, anyhow};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use repset::experiment::Experiment;
use repset::model::{Switching, Variant, evaluate_fixed_set_with};
use repset::population::{filter_population, ingest_sessions, profiles_from_traces, write_population_csv};
use repset::report::{
    SweepAxis, SweepSpec, distribution_by_video_and_resolution, observations, parse_axis_value, rate_range_summary,
    relative_popularity, run_sweep, write_distribution_csv, write_popularity_csv, write_rate_ranges_csv,
};
use repset::sim::{Controller, Scoring, SimResult, simulate, synthesize_traces};
use repset::solve::{SolveStatus, export_lp, solve};
use repset::{Error, RepresentationSet, Vendor, catalog::builtin_recommendation};

#[derive(Parser, Debug)]
#[command(name = "repset", version, about = "Choose video representation sets for a user population")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Maximum number of representations.
    #[arg(long)]
    k: Option<usize>,
    /// CDN budget per user in kbps, or `unconstrained`.
    #[arg(long)]
    c: Option<String>,
    /// Fraction of users that must be served.
    #[arg(long)]
    p: Option<f64>,
    /// Minimum serving time of a served user.
    #[arg(long = "t-min")]
    t_min: Option<f64>,
    /// `adjacent` or `none`.
    #[arg(long)]
    switching: Option<Switching>,
    /// `continuous` or `binary`.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, env = "REPSET_SEED")]
    seed: Option<u64>,
    /// Solver time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the best representation set.
    Optimize(Common),
    /// Score a fixed set on the population, model and simulator side by side.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// apple, microsoft, netflix or file:<path.csv>
        #[arg(long)]
        set: String,
    },
    /// Play a fixed set over synthesized traces.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        set: String,
        /// ilp_controller or no_outage
        #[arg(long)]
        controller: Option<Controller>,
    },
    /// Solve and simulate along one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// K, C, sport_ratio_x or hdtv_ratio_y
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Build a population from a session trace CSV.
    Ingest {
        trace: PathBuf,
        #[arg(long)]
        users: usize,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long, env = "REPSET_SEED", default_value_t = 1)]
        seed: u64,
    },
    /// Write the optimization model in LP format.
    ExportLp(Common),
    /// Print a vendor ladder as CSV.
    ShowRecommendation { vendor: Vendor },
}

enum Failure {
    Usage(anyhow::Error),
    Infeasible(String),
    Io(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Optimize(common) => optimize(&common),
        Command::Evaluate { common, set } => evaluate(&common, &set),
        Command::Simulate { common, set, controller } => simulate_cmd(&common, &set, controller),
        Command::Sweep { common, axis, values, runs } => sweep(&common, axis, &values, runs),
        Command::Ingest { trace, users, out, seed } => ingest(&trace, users, &out, seed),
        Command::ExportLp(common) => export(&common),
        Command::ShowRecommendation { vendor } => {
            let stdout = io::stdout();
            builtin_recommendation(vendor).write_csv(stdout.lock())?;
            Ok(())
        }
    }
}

/// Loads the config, applies flag overrides and prepares the output directory.
fn load(common: &Common) -> Outcome<Experiment> {
    if !common.config.is_file() {
        return Err(Failure::Usage(anyhow!("config file {} not found", common.config.display())));
    }
    let text = fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))
        .map_err(Failure::Io)?;
    let mut exp: Experiment = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", common.config.display()))
        .map_err(Failure::Usage)?;
    if let Some(k) = common.k {
        exp.problem.max_representations = k;
    }
    if let Some(c) = &common.c {
        let v = parse_axis_value(c)?;
        exp.problem.cdn_budget_kbps = v.is_finite().then_some(v);
    }
    if let Some(p) = common.p {
        exp.problem.served_fraction = p;
    }
    if let Some(t) = common.t_min {
        exp.problem.min_serving_time = t;
    }
    if let Some(s) = common.switching {
        exp.problem.switching = s;
    }
    if let Some(v) = common.variant {
        exp.problem.variant = v;
    }
    if let Some(seed) = common.seed {
        exp.set_seed(seed);
    }
    if let Some(t) = common.time_limit {
        exp.solver.time_limit_s = t;
    }
    exp.validate()?;
    let exp = exp.effective();
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display())).map_err(Failure::Io)?;
    let echo = serde_json::to_value(&exp).map_err(|e| Failure::Usage(e.into()))?;
    write_json(&common.out.join("effective_config.json"), &echo)?;
    Ok(exp)
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Io)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn resolve_set(spec: &str) -> Outcome<RepresentationSet> {
    match spec.strip_prefix("file:") {
        Some(path) => Ok(RepresentationSet::load_csv(Path::new(path))?),
        None => {
            let vendor: Vendor = spec.parse().map_err(|e: Error| Failure::Usage(e.into()))?;
            Ok(builtin_recommendation(vendor))
        }
    }
}

fn optimize(common: &Common) -> Outcome {
    let exp = load(common)?;
    let users = exp.users()?;
    let start = Instant::now();
    let inst = exp.instance(&users)?;
    let build_s = start.elapsed().as_secs_f64();
    let report = solve(&inst, &exp.solver)?;
    let summary = inst.summary();
    write_json(
        &common.out.join("solution.json"),
        &json!({
            "status": report.status,
            "objective": report.objective(),
            "objective_per_user": report.solution.as_ref().map(|s| s.objective_per_user),
            "bound": report.bound,
            "gap": report.gap(),
            "nodes_explored": report.nodes_explored,
            "build_time_s": build_s,
            "solve_time_s": report.wall_time_s,
            "witness_user": report.witness,
            "instance": summary,
            "solution": report.solution,
        }),
    )?;
    let Some(sol) = &report.solution else {
        let witness = report.witness.map_or("none".to_string(), |u| u.to_string());
        return match report.status {
            SolveStatus::Infeasible => Err(Failure::Infeasible(format!("no feasible set; witness user {witness}"))),
            _ => Err(Failure::Infeasible(format!("no feasible set found within the limits; witness user {witness}"))),
        };
    };
    sol.representation_set("optimized").save_csv(&common.out.join("representations.csv"))?;
    write_distribution_csv(create(&common.out.join("distribution.csv"))?, &distribution_by_video_and_resolution(&sol.beta))?;
    write_popularity_csv(create(&common.out.join("popularity.csv"))?, &relative_popularity(sol))?;
    write_rate_ranges_csv(create(&common.out.join("rate_ranges.csv"))?, "", &rate_range_summary(&[sol.beta.as_slice()]))?;
    println!(
        "status {:?}  objective {:.6}  per user {:.6}  representations {}  gap {:.2e}  time {:.2}s",
        report.status,
        sol.objective,
        sol.objective_per_user,
        sol.beta.len(),
        report.gap().unwrap_or(0.0),
        report.wall_time_s
    );
    for note in observations(sol) {
        println!("  {note}");
    }
    Ok(())
}

fn sim_line(label: &str, r: &SimResult) -> String {
    format!(
        "{label:<15} qoe {:.6}  serving {:.4}  zero-excess {:.4}",
        r.average_qoe,
        r.average_serving_time,
        r.zero_excess_fraction()
    )
}

fn evaluate(common: &Common, spec: &str) -> Outcome {
    let exp = load(common)?;
    let set = resolve_set(spec)?;
    let users = exp.users()?;
    let table = exp.table()?;
    let overrides = exp.score_overrides()?;
    let eval = evaluate_fixed_set_with(&users, &set, &table, &exp.problem, &overrides)?;
    let traces = synthesize_traces(&users, exp.sim.chunks_per_user, exp.sim.seed)?;
    let scoring = Scoring::new(&table, &overrides);
    let ilp = simulate(&users, &traces, &set, scoring, exp.problem.switching, Controller::IlpController)?;
    let no_outage = simulate(&users, &traces, &set, scoring, exp.problem.switching, Controller::NoOutage)?;
    write_json(
        &common.out.join("evaluation.json"),
        &json!({
            "set": set.label,
            "representations": set.len(),
            "objective": eval.solution.objective,
            "objective_per_user": eval.solution.objective_per_user,
            "constraints": eval.constraints,
            "ilp_controller": ilp,
            "no_outage": {
                "average_qoe": no_outage.average_qoe,
                "zero_excess_fraction": no_outage.zero_excess_fraction(),
            },
        }),
    )?;
    set.save_csv(&common.out.join("representations.csv"))?;
    ilp.write_per_user_csv(create(&common.out.join("per_user.csv"))?)?;
    no_outage.write_excess_cdf_csv(create(&common.out.join("excess_cdf.csv"))?, 100)?;
    write_distribution_csv(
        create(&common.out.join("distribution.csv"))?,
        &distribution_by_video_and_resolution(set.as_slice()),
    )?;
    println!("set {}  representations {}", set.label, set.len());
    println!(
        "model           objective {:.6}  per user {:.6}  served {}/{}  feasible {}",
        eval.solution.objective,
        eval.solution.objective_per_user,
        eval.constraints.served_users,
        users.len(),
        eval.constraints.feasible()
    );
    println!("{}", sim_line("ilp_controller", &ilp));
    println!("{}", sim_line("no_outage", &no_outage));
    Ok(())
}

fn simulate_cmd(common: &Common, spec: &str, controller: Option<Controller>) -> Outcome {
    let exp = load(common)?;
    let set = resolve_set(spec)?;
    let users = exp.users()?;
    let table = exp.table()?;
    let overrides = exp.score_overrides()?;
    let traces = synthesize_traces(&users, exp.sim.chunks_per_user, exp.sim.seed)?;
    let controller = controller.unwrap_or(exp.sim.controller);
    let result =
        simulate(&users, &traces, &set, Scoring::new(&table, &overrides), exp.problem.switching, controller)?;
    result.write_per_user_csv(create(&common.out.join("per_user.csv"))?)?;
    result.write_excess_cdf_csv(create(&common.out.join("excess_cdf.csv"))?, 100)?;
    write_json(&common.out.join("simulation.json"), &json!({ "controller": controller, "result": result }))?;
    println!("{}", sim_line(&format!("{controller:?}"), &result));
    if !result.unservable.is_empty() {
        println!("unservable users: {:?}", result.unservable);
    }
    Ok(())
}

fn sweep(common: &Common, axis: SweepAxis, values: &[String], runs: usize) -> Outcome {
    let exp = load(common)?;
    let values = values.iter().map(|v| parse_axis_value(v)).collect::<Result<Vec<f64>, _>>()?;
    let seed = common.seed.unwrap_or(1);
    let spec = SweepSpec { axis, values, runs, seed };
    let outcome = run_sweep(&spec, &exp)?;
    outcome.write_sweep_csv(create(&common.out.join("sweep.csv"))?)?;
    outcome.write_distribution_csv(create(&common.out.join("distribution.csv"))?)?;
    outcome.write_popularity_csv(create(&common.out.join("popularity.csv"))?)?;
    outcome.write_rate_ranges_csv(create(&common.out.join("rate_ranges.csv"))?)?;
    let infeasible = outcome.rows.iter().filter(|r| r.objective.is_none()).count();
    println!("{} rows written, {} without a feasible set", outcome.rows.len(), infeasible);
    Ok(())
}

fn ingest(trace: &Path, users: usize, out: &Path, seed: u64) -> Outcome {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display())).map_err(Failure::Io)?;
    let report = ingest_sessions(io::BufReader::new(file))?;
    let picked = filter_population(report.traces.values(), users)?;
    let mix = repset::population::ScenarioConfig::default().video_mix;
    let profiles = profiles_from_traces(&picked, &mix, seed)?;
    fs::create_dir_all(out)?;
    write_population_csv(&profiles, create(&out.join("population.csv"))?)?;
    write_json(&out.join("users.json"), &json!({ "kind": "explicit", "users": profiles }))?;
    println!(
        "{} users kept of {}; {} rows rejected, {} warm-up rows dropped",
        profiles.len(),
        report.traces.len(),
        report.rejected_rows,
        report.warmup_rows
    );
    Ok(())
}

fn export(common: &Common) -> Outcome {
    let exp = load(common)?;
    let users = exp.users()?;
    let inst = exp.instance(&users)?;
    let path = common.out.join("model.lp");
    export_lp(&inst, &path)?;
    let counts = inst.constraint_count();
    println!("wrote {} ({} constraints)", path.display(), counts.total());
    Ok(())
}
