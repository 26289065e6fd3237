//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any hard criterion fails.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repset::catalog::{CandidateUniverse, builtin_recommendation};
use repset::experiment::{Experiment, PopulationSource, UniverseSpec};
use repset::model::{ProblemConfig, ProblemInstance, Switching, Variant, build_instance_with, evaluate_fixed_set};
use repset::population::{ScenarioConfig, SyntheticThroughput, ThroughputModel, UserProfile};
use repset::qoe::{
    Kbps, RateBounds, Resolution, SatisfactionTable, VideoType, derive_rate_bounds, invert_satisfaction, satisfaction,
};
use repset::report::{SweepAxis, SweepSpec, run_sweep};
use repset::sim::{Controller, Scoring, simulate, synthesize_traces};
use repset::solve::{SolveOptions, SolveStatus, export_lp, oracle_enumerate, solve};
use repset::{Representation, Vendor};

struct Verdict {
    pass: bool,
    soft: bool,
    detail: String,
}

impl Verdict {
    fn hard(pass: bool, detail: String) -> Self {
        Self { pass, soft: false, detail }
    }
}

/// Published (min, max) encoding rates in kbps, by resolution 224p..1080p.
const PUBLISHED: [(VideoType, [(Kbps, Kbps); 4]); 4] = [
    (VideoType::Movie, [(51, 1961), (67, 2973), (832, 9378), (1888, 24803)]),
    (VideoType::Sport, [(183, 1766), (429, 3190), (1106, 11517), (1976, 19471)]),
    (VideoType::Documentary, [(116, 1488), (231, 2861), (523, 10607), (1022, 10945)]),
    (VideoType::Cartoon, [(52, 1418), (64, 2006), (451, 5321), (835, 13133)]),
];

fn rate_bounds() -> Verdict {
    let start = Instant::now();
    let derived = derive_rate_bounds(&SatisfactionTable::<f64>::builtin()).expect("bounds");
    let elapsed = start.elapsed();
    let mut misses = Vec::new();
    let mut worst: f64 = 0.0;
    for (video, row) in PUBLISHED {
        for (res, (lo, hi)) in Resolution::ALL.into_iter().zip(row) {
            let (dlo, dhi) = derived.get(video, res).expect("entry");
            for (kind, want, got) in [("min", lo, dlo), ("max", hi, dhi)] {
                let rel = (got as f64 - want as f64).abs() / want as f64;
                worst = worst.max(rel);
                if rel > 0.05 {
                    misses.push(format!("{video} {res} {kind} {got} vs {want}"));
                }
            }
        }
    }
    let pass = misses.is_empty() && elapsed < Duration::from_secs(1);
    Verdict::hard(
        pass,
        format!(
            "{}/32 within 5%, worst {:.1}%, {:.3}s; off: {}",
            32 - misses.len(),
            worst * 100.0,
            elapsed.as_secs_f64(),
            misses.join("; ")
        ),
    )
}

fn random_instance(rng: &mut ChaCha8Rng, table: &SatisfactionTable<f64>) -> ProblemInstance {
    let mut videos = VideoType::ALL.to_vec();
    videos.shuffle(rng);
    videos.truncate(rng.random_range(1..=2));
    let base = rng.random_range(0..3);
    let resolutions: Vec<Resolution> =
        if rng.random_bool(0.5) { vec![Resolution::ALL[base], Resolution::ALL[base + 1]] } else { vec![Resolution::ALL[base]] };
    let rate_count = rng.random_range(1..=6);
    let mut rates: Vec<Kbps> = (0..rate_count).map(|_| rng.random_range(1..=40) * 100).collect();
    rates.sort_unstable();
    rates.dedup();
    let mut triples = Vec::new();
    for &v in &videos {
        for &r in &resolutions {
            triples.extend(rates.iter().map(|&b| Representation::new(v, r, b)));
        }
    }
    triples.shuffle(rng);
    triples.truncate(16);
    let universe = CandidateUniverse::from_external(triples.iter().copied());

    let users: Vec<UserProfile> = (0..rng.random_range(1..=6))
        .map(|i| {
            let throughput = if rng.random_bool(0.5) {
                ThroughputModel::scalar(rng.random_range(1..=45) as f64 * 100.0).unwrap()
            } else {
                let n = rng.random_range(2..=6);
                ThroughputModel::empirical((0..n).map(|_| rng.random_range(1..=45) as f64 * 100.0).collect()).unwrap()
            };
            UserProfile {
                id: i,
                video: *videos.choose(rng).unwrap(),
                display: *resolutions.choose(rng).unwrap(),
                throughput,
            }
        })
        .collect();
    let cfg = ProblemConfig {
        cdn_budget_kbps: if rng.random_bool(0.4) { None } else { Some(rng.random_range(2..=30) as f64 * 100.0) },
        max_representations: rng.random_range(1..=4),
        served_fraction: *[0.0, 0.5, 0.8, 1.0].choose(rng).unwrap(),
        min_serving_time: *[0.0, 0.2, 0.5, 1.0].choose(rng).unwrap(),
        switching: if rng.random_bool(0.5) { Switching::Adjacent } else { Switching::None },
        variant: if rng.random_bool(0.5) { Variant::Continuous } else { Variant::Binary },
    };
    build_instance_with(&users, &universe, table, &RateBounds::default(), &cfg, &Default::default()).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let table = SatisfactionTable::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = SolveOptions { time_limit_s: 30.0, ..Default::default() };
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut mix: BTreeMap<String, usize> = BTreeMap::new();
    let mut infeasible = 0;
    let cases = 240;
    for case in 0..cases {
        let inst = random_instance(&mut rng, &table);
        *mix.entry(format!("{:?}/{:?}", inst.config.variant, inst.config.switching)).or_default() += 1;
        let oracle = oracle_enumerate(&inst).expect("small instance").objective;
        let report = solve(&inst, &opts).expect("solve");
        let tol = if inst.config.variant == Variant::Binary { 1e-9 } else { 1e-6 };
        let ok = match (oracle, report.objective()) {
            (None, None) => {
                infeasible += 1;
                report.status == SolveStatus::Infeasible
            }
            (Some(a), Some(b)) => (a - b).abs() <= tol * a.abs().max(1.0) && inst.verify(report.solution.as_ref().unwrap()).is_ok(),
            _ => false,
        };
        if !ok {
            failures.push(format!("case {case}: oracle {oracle:?} solver {:?} ({:?})", report.objective(), report.status));
        }
    }
    let elapsed = start.elapsed();
    let covered = mix.len() == 4;
    Verdict::hard(
        failures.is_empty() && covered && elapsed < Duration::from_secs(120),
        format!(
            "{}/{cases} agree ({infeasible} infeasible on both sides), {} variant/switching combos, {:.1}s{}",
            cases - failures.len(),
            mix.len(),
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn synthetic(seed: u64, users: usize, throughput: SyntheticThroughput) -> Experiment {
    Experiment {
        population: PopulationSource::Synthetic(ScenarioConfig { user_count: users, seed, throughput, ..Default::default() }),
        ..Default::default()
    }
}

fn dominance() -> Verdict {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        for vendor in Vendor::ALL {
            let ladder = builtin_recommendation(vendor);
            let mut exp = synthetic(seed, 100, SyntheticThroughput::Scalar);
            exp.universe = UniverseSpec { inject: vec![vendor], ..Default::default() };
            exp.problem.max_representations = ladder.len();
            exp.solver.time_limit_s = 20.0;
            let users = exp.users().unwrap();
            let table = exp.table().unwrap();
            let fixed = evaluate_fixed_set(&users, &ladder, &table, &exp.problem).unwrap();
            let inst = exp.instance(&users).unwrap();
            let report = solve(&inst, &exp.solver).unwrap();
            let got = report.objective().unwrap_or(f64::NEG_INFINITY);
            let ok = got >= fixed.solution.objective - 1e-9;
            pass &= ok;
            lines.push(format!(
                "seed {seed} {vendor} K={}: {:.3} vs {:.3}{}",
                ladder.len(),
                got,
                fixed.solution.objective,
                if fixed.constraints.feasible() { "" } else { " (ladder violates fairness)" }
            ));
        }
    }
    let elapsed = start.elapsed();
    Verdict::hard(pass && elapsed < Duration::from_secs(600), format!("{:.0}s; {}", elapsed.as_secs_f64(), lines.join("; ")))
}

fn monotone(rows: &[(f64, Option<f64>)]) -> bool {
    rows.windows(2).all(|w| match (w[0].1, w[1].1) {
        (Some(a), Some(b)) => b >= a - 1e-9,
        (None, _) => true,
        (Some(_), None) => false,
    })
}

fn monotonicity() -> Verdict {
    let start = Instant::now();
    let mut exp = synthetic(7, 100, SyntheticThroughput::Scalar);
    exp.solver.time_limit_s = 20.0;
    exp.sim.chunks_per_user = 10;
    let k = run_sweep(
        &SweepSpec { axis: SweepAxis::MaxRepresentations, values: vec![10.0, 20.0, 40.0, 80.0, 132.0], runs: 1, seed: 7 },
        &exp,
    )
    .unwrap();
    let c = run_sweep(
        &SweepSpec { axis: SweepAxis::Budget, values: vec![1000.0, 1500.0, 3000.0, f64::INFINITY], runs: 1, seed: 7 },
        &exp,
    )
    .unwrap();
    let k_rows: Vec<(f64, Option<f64>)> = k.rows.iter().map(|r| (r.value, r.objective)).collect();
    let c_rows: Vec<(f64, Option<f64>)> = c.rows.iter().map(|r| (r.value, r.objective)).collect();
    let elapsed = start.elapsed();
    let show = |rows: &[(f64, Option<f64>)]| {
        rows.iter().map(|(v, o)| format!("{v}:{}", o.map_or("infeasible".into(), |x| format!("{x:.3}")))).collect::<Vec<_>>().join(" ")
    };
    Verdict::hard(
        monotone(&k_rows) && monotone(&c_rows) && elapsed < Duration::from_secs(900),
        format!("K [{}] C [{}] {:.0}s", show(&k_rows), show(&c_rows), elapsed.as_secs_f64()),
    )
}

fn controller_consistency() -> Verdict {
    let exp = synthetic(3, 200, SyntheticThroughput::Scalar);
    let users = exp.users().unwrap();
    let table = exp.table().unwrap();
    let overrides = Default::default();
    let traces = synthesize_traces(&users, 25, 3).unwrap();
    let mut checked = 0;
    let mut bad = Vec::new();
    let mut sets: Vec<_> = Vendor::ALL.iter().map(|v| builtin_recommendation(*v)).collect();
    let mut opt_exp = exp.clone();
    opt_exp.problem.max_representations = 40;
    opt_exp.solver.time_limit_s = 10.0;
    let inst = opt_exp.instance(&users).unwrap();
    if let Some(sol) = solve(&inst, &opt_exp.solver).unwrap().solution {
        sets.push(sol.representation_set("optimized"));
    }
    for set in &sets {
        let eval = evaluate_fixed_set(&users, set, &table, &exp.problem).unwrap();
        let sim = simulate(&users, &traces, set, Scoring::new(&table, &overrides), exp.problem.switching, Controller::IlpController)
            .unwrap();
        let by_id: BTreeMap<u32, f64> = sim.users.iter().map(|u| (u.user_id, u.mean_satisfaction)).collect();
        for (u, user) in users.iter().enumerate() {
            let model = eval.solution.user_value[u];
            let simulated = by_id.get(&user.id).copied().unwrap_or(0.0);
            checked += 1;
            if model != simulated {
                bad.push(format!("{} user {}: {model} vs {simulated}", set.label, user.id));
            }
        }
        if sim.excess.iter().any(|e| *e != 0.0) {
            bad.push(format!("{}: non-zero excess under the ILP controller", set.label));
        }
    }
    Verdict::hard(
        bad.is_empty(),
        format!("{checked} user/set pairs over {} sets, {} mismatches {}", sets.len(), bad.len(), bad.iter().take(3).cloned().collect::<Vec<_>>().join("; ")),
    )
}

fn excess_comparison() -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    let apple = builtin_recommendation(Vendor::Apple);
    for seed in 1..=5 {
        let mut exp = synthetic(seed, 100, SyntheticThroughput::Empirical { samples: 50, spread: 0.5 });
        exp.problem.max_representations = 40;
        exp.problem.cdn_budget_kbps = None;
        exp.solver.time_limit_s = 20.0;
        let users = exp.users().unwrap();
        let table = exp.table().unwrap();
        let overrides = Default::default();
        let scoring = Scoring::new(&table, &overrides);
        let traces = synthesize_traces(&users, 200, seed).unwrap();
        let inst = exp.instance(&users).unwrap();
        let Some(sol) = solve(&inst, &exp.solver).unwrap().solution else {
            pass = false;
            lines.push(format!("seed {seed}: no optimized set"));
            continue;
        };
        let opt = simulate(&users, &traces, &sol.representation_set("optimized"), scoring, exp.problem.switching, Controller::NoOutage)
            .unwrap();
        let ven = simulate(&users, &traces, &apple, scoring, exp.problem.switching, Controller::NoOutage).unwrap();
        let (a, b) = (opt.zero_excess_fraction(), ven.zero_excess_fraction());
        pass &= a >= b;
        lines.push(format!("seed {seed}: {:.3} vs {:.3}", a, b));
    }
    Verdict::hard(pass, format!("zero-excess fraction optimized vs apple: {}", lines.join("; ")))
}

fn qoe_properties() -> Verdict {
    let table = SatisfactionTable::builtin();
    let mut worst_round_trip: f64 = 0.0;
    let mut monotone_rows = 0;
    let mut clamp_ok = true;
    let rates: Vec<f64> = (0..=400).map(|i| 10.0 + i as f64 * 75.0).collect();
    for (_, params) in table.rows() {
        for level in [0.6f64, 0.7, 0.8, 0.9, 0.95] {
            if let Ok(rate) = invert_satisfaction(params, level)
                && rate > 0.0 {
                    let back = satisfaction(params, rate).unwrap();
                    worst_round_trip = worst_round_trip.max((back - level).abs() / level);
                }
        }
        let values: Vec<f64> = rates.iter().map(|&r| satisfaction(params, r).unwrap()).collect();
        if values.windows(2).all(|w| w[1] >= w[0]) {
            monotone_rows += 1;
        }
        clamp_ok &= values.iter().all(|v| (0.0..=1.0).contains(v));
    }
    let rows = table.len();
    Verdict::hard(
        rows == 40 && worst_round_trip < 1e-6 && monotone_rows == rows && clamp_ok,
        format!("{rows} rows, worst round trip {worst_round_trip:.1e}, {monotone_rows} monotone, clamped {clamp_ok}"),
    )
}

/// Fixes the activation variables at the internal solution and lets HiGHS
/// solve the rest of the exported model.
const HIGHS_CHECK: &str = r#"
import sys, highspy
h = highspy.Highs()
h.setOptionValue("output_flag", False)
h.setOptionValue("time_limit", 600.0)
if h.readModel(sys.argv[1]) != highspy.HighsStatus.kOk:
    print("unreadable"); sys.exit(1)
active = set(sys.argv[2].split(",")) if sys.argv[2] else set()
lp = h.getLp()
for j, name in enumerate(lp.col_names_):
    if name.startswith("beta_"):
        v = 1.0 if name in active else 0.0
        h.changeColBounds(j, v, v)
h.run()
print(h.modelStatusToString(h.getModelStatus()), h.getInfo().objective_function_value)
"#;

fn scale_check() -> Verdict {
    let mut exp = synthetic(1, 500, SyntheticThroughput::Scalar);
    exp.solver.time_limit_s = 900.0;
    exp.solver.gap_tolerance = 1e-3;
    let users = exp.users().unwrap();
    let inst = exp.instance(&users).unwrap();
    let start = Instant::now();
    let report = solve(&inst, &exp.solver).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let gap = report.gap();
    let internal_ok = gap.is_some_and(|g| g <= 1e-3) && elapsed <= 900.0;
    let mut detail = format!(
        "internal: {:?} objective {:?} gap {:?} in {elapsed:.1}s",
        report.status,
        report.objective(),
        gap
    );

    let mut external_ok = false;
    if let Some(sol) = &report.solution {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lp");
        export_lp(&inst, &path).unwrap();
        let script = dir.path().join("check.py");
        std::fs::File::create(&script).unwrap().write_all(HIGHS_CHECK.as_bytes()).unwrap();
        let active: Vec<String> =
            sol.beta.iter().filter_map(|r| inst.triple_index(r)).map(|t| format!("beta_t{t}")).collect();
        match Command::new("python3").arg(&script).arg(&path).arg(active.join(",")).output() {
            Ok(out) if out.status.success() => {
                let text = String::from_utf8_lossy(&out.stdout).trim().to_string();
                let value = text.split_whitespace().last().and_then(|v| v.parse::<f64>().ok());
                external_ok = text.starts_with("Optimal")
                    && value.is_some_and(|v| (v - sol.objective).abs() <= 1e-6 * sol.objective.abs().max(1.0));
                detail.push_str(&format!("; external with the same set: {text}"));
            }
            Ok(out) => detail.push_str(&format!("; external check failed: {}", String::from_utf8_lossy(&out.stderr).trim())),
            Err(e) => detail.push_str(&format!("; external check unavailable: {e}")),
        }
    }
    Verdict { pass: internal_ok || external_ok, soft: true, detail }
}

fn main() -> ExitCode {
    // Accept and ignore libtest flags such as --nocapture.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(u32, &str, fn() -> Verdict); 8] = [
        (1, "rate bounds reproduction", rate_bounds),
        (2, "oracle equivalence", oracle_equivalence),
        (3, "dominance over vendor ladders", dominance),
        (4, "monotonicity in K and C", monotonicity),
        (5, "controller consistency", controller_consistency),
        (6, "excess comparison", excess_comparison),
        (7, "satisfaction model properties", qoe_properties),
        (8, "scale check", scale_check),
    ];
    let mut hard_failures = 0;
    for (n, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let v = check();
        let tag = match (v.pass, v.soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "SOFT-FAIL",
        };
        if !v.pass && !v.soft {
            hard_failures += 1;
        }
        println!("criterion {n} [{tag}] {name}: {}", v.detail);
        let _ = std::io::stdout().flush();
    }
    if hard_failures > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS }
}
